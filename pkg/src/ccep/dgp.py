"""Synthetic factor-model panels with known truth.

Each unit is generated from

    y_i = D alpha_i + X_i beta_i + F gamma_i + e_i,

with ``alpha_i = alpha + a_i`` and ``beta_i = beta + b_i``.  A shared latent
vector ``h_i ~ N(0, I_q)`` is the single channel through which loadings,
regressors and slopes become correlated.

Randomness
----------
Every random quantity of unit ``i`` is a fixed linear or monotone function of
one row of standard normals ``Z[i]``.  Rows are drawn in blocks of
:data:`BLOCK_UNITS` units, block ``b`` from its own Philox stream keyed by
``SeedSequence(seed, spawn_key=(b,))``.  Unit ``i`` therefore depends only on
``(config, seed, i)``: generating blocks in any order or on any number of
workers gives the same panel, and a panel of ``N`` units is a prefix of a
panel of ``N' > N`` units drawn with the same seed.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from .errors import InvalidConfig
from .panel import PanelDataset
from .variance import normal_quantile

#: Units per random-number block.
BLOCK_UNITS = 256

FACTOR_MODES = ("none", "explicit", "additive", "linear_trend", "bsw")
REGRESSOR_MODELS = ("general", "scf", "staggered")
ERROR_MODELS = ("iid", "ar1", "het")
BSW_COLUMNS = ("const", "trend", "mean_x")


def _arr(x, ndim: int, name: str) -> np.ndarray | None:
    if x is None:
        return None
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != ndim:
        raise InvalidConfig(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidConfig(f"{name} contains non-finite values")
    return a


def _tuplify(a):
    if a is None:
        return None
    if isinstance(a, (str, bool, int, float)):
        return a
    if isinstance(a, np.ndarray):
        a = a.tolist()
    return tuple(_tuplify(v) for v in a)


def _psd_root(cov: np.ndarray, name: str) -> np.ndarray:
    """Symmetric square root of a PSD matrix (works for singular covariances)."""
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
        raise InvalidConfig(f"{name} must be a symmetric square matrix")
    w, V = np.linalg.eigh(cov)
    if w.size and w[0] < -1e-10 * max(1.0, abs(w[-1])):
        raise InvalidConfig(f"{name} is not positive semi-definite (min eigenvalue {w[0]:.3g})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _std_normal_quantile(p: np.ndarray) -> np.ndarray:
    return np.array([normal_quantile(float(v)) for v in np.ravel(p)]).reshape(np.shape(p))


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process.

    Matrices are stored as nested tuples so the config is hashable and maps
    one-to-one onto JSON.  ``None`` selects a documented default.

    Attributes
    ----------
    T, k : int
    beta : sequence of k floats
        Mean slopes.
    factor_mode : str
        ``"none"`` (no factors), ``"explicit"`` (``F`` given, T x p),
        ``"additive"`` (``F`` = ones, p = 1), ``"linear_trend"``
        (``F = [1, t]``, p = 2) or ``"bsw"`` (``F = Psi Lambda`` where the
        columns of ``Psi`` follow ``bsw_template`` and use the population
        regressor means).
    loading_mean, loading_cov, loading_link
        ``gamma_i = loading_mean + loading_cov^{1/2} z + loading_link' h_i``;
        ``loading_link`` is q x p.
    latent_dim : int
        Dimension q of the shared latent ``h_i``.
    regressor_model : str
        ``"general"``: ``X_i = mu_x + 1 (x_link' h_i)' + s_i V_i``.
        ``"scf"``: ``X_i = F Gamma_i + V_i`` with
        ``Gamma_i = gamma_x_mean + gamma_x_sd Z + sum_l h_il gamma_x_link[l]``.
        ``"staggered"``: binary adoption indicators; unit joins cohort ``j``
        when ``c h_i1 + sqrt(1 - c^2) z_j`` falls below the
        ``cohort_fractions[j]`` normal quantile and then
        ``x_itj = 1`` for ``t >= cohort_starts[j]`` (1-based periods).
    v_sd, v_rho
        ``V_i`` is Gaussian AR(1) with stationary start (iid when rho = 0).
    error_model, e_sd, e_rho, e_het
        ``"iid"``, ``"ar1"`` or ``"het"``; the heteroskedastic map is
        ``sd_it = e_sd sqrt(1 + e_het x_it1^2)``.
    slope_cov, slope_link, slope_quad, slope_var_link
        ``b_i = slope_cov^{1/2} z_b + slope_link' h_i + slope_quad (h_i1^2 - 1)``.
        ``slope_var_link`` (delta) scales ``V_i`` by
        ``s_i = exp(delta z_b1 - delta^2)``, which correlates the within
        variation of ``X_i`` with the slopes.
    D, alpha, alpha_cov
        Aggregate regressors (T x r), their mean coefficient and the
        covariance of ``a_i``.
    """

    T: int
    k: int
    beta: tuple
    factor_mode: str = "none"
    F: Any = None
    bsw_template: tuple = ("mean_x",)
    bsw_lambda: Any = None
    loading_mean: Any = None
    loading_cov: Any = None
    loading_link: Any = None
    latent_dim: int = 1
    regressor_model: str = "general"
    mu_x: Any = None
    x_link: Any = None
    gamma_x_mean: Any = None
    gamma_x_sd: float = 0.0
    gamma_x_link: Any = None
    v_sd: float = 1.0
    v_rho: float = 0.0
    cohort_fractions: Any = None
    cohort_starts: Any = None
    cohort_link: float = 0.0
    error_model: str = "iid"
    e_sd: float = 1.0
    e_rho: float = 0.0
    e_het: float = 0.0
    slope_cov: Any = None
    slope_link: Any = None
    slope_quad: Any = None
    slope_var_link: float = 0.0
    D: Any = None
    alpha: Any = None
    alpha_cov: Any = None
    seed: int = 0
    name: str = ""
    note: str = ""

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, np.ndarray)) or (isinstance(v, tuple) and f.name != "bsw_template"):
                object.__setattr__(self, f.name, _tuplify(v))
        object.__setattr__(self, "bsw_template", tuple(self.bsw_template))
        self.validate()

    # -- derived quantities -------------------------------------------------------

    @property
    def p(self) -> int:
        return 0 if self.factor_mode == "none" else self.factor_matrix().shape[1]

    @property
    def r(self) -> int:
        return 0 if self.D is None else np.asarray(self.D).shape[1]

    @property
    def q(self) -> int:
        return int(self.latent_dim)

    def mu_x_matrix(self) -> np.ndarray:
        """Population mean of ``X_i`` (T x k)."""
        T, k = self.T, self.k
        if self.regressor_model == "staggered":
            mu = np.zeros((T, k))
            for j, (rho, start) in enumerate(zip(self.cohort_fractions, self.cohort_starts)):
                mu[int(start) - 1:, j] = rho
            return mu
        if self.regressor_model == "scf":
            G = np.asarray(self.gamma_x_mean, dtype=np.float64)
            return self._raw_factors() @ G
        if self.mu_x is not None:
            return np.asarray(self.mu_x, dtype=np.float64)
        t = np.arange(1, T + 1, dtype=np.float64)[:, None]
        j = np.arange(1, k + 1, dtype=np.float64)[None, :]
        return 1.0 + 0.5 * np.cos(0.9 * t * j)

    def _raw_factors(self) -> np.ndarray:
        T = self.T
        t = np.arange(1, T + 1, dtype=np.float64)
        if self.factor_mode == "explicit":
            return np.asarray(self.F, dtype=np.float64)
        if self.factor_mode == "additive":
            return np.ones((T, 1))
        if self.factor_mode == "linear_trend":
            return np.column_stack([np.ones(T), t])
        return np.zeros((T, 0))

    def bsw_psi(self) -> np.ndarray:
        """Population proxy matrix for the BSW template."""
        t = np.arange(1, self.T + 1, dtype=np.float64)
        cols = []
        for tok in self.bsw_template:
            if tok == "const":
                cols.append(np.ones((self.T, 1)))
            elif tok == "trend":
                cols.append(t[:, None])
            else:
                cols.append(self.mu_x_matrix())
        return np.hstack(cols)

    def factor_matrix(self) -> np.ndarray:
        if self.factor_mode == "bsw":
            return self.bsw_psi() @ np.asarray(self.bsw_lambda, dtype=np.float64)
        return self._raw_factors()

    # -- validation ----------------------------------------------------------------

    def validate(self) -> None:
        T, k, q = int(self.T), int(self.k), int(self.latent_dim)
        if T < 2 or k < 1 or q < 1:
            raise InvalidConfig("need T >= 2, k >= 1, latent_dim >= 1")
        beta = _arr(self.beta, 1, "beta")
        if beta.shape != (k,):
            raise InvalidConfig(f"beta has {beta.size} entries, k={k}")
        if self.factor_mode not in FACTOR_MODES:
            raise InvalidConfig(f"factor_mode must be one of {FACTOR_MODES}")
        if self.regressor_model not in REGRESSOR_MODELS:
            raise InvalidConfig(f"regressor_model must be one of {REGRESSOR_MODELS}")
        if self.error_model not in ERROR_MODELS:
            raise InvalidConfig(f"error_model must be one of {ERROR_MODELS}")
        for name in ("v_rho", "e_rho"):
            if not -1.0 < float(getattr(self, name)) < 1.0:
                raise InvalidConfig(f"{name} must lie in (-1, 1)")
        for name in ("v_sd", "e_sd", "gamma_x_sd", "e_het"):
            if float(getattr(self, name)) < 0:
                raise InvalidConfig(f"{name} must be non-negative")

        if self.factor_mode == "explicit":
            F = _arr(self.F, 2, "F")
            if F is None or F.shape[0] != T or F.shape[1] < 1:
                raise InvalidConfig("explicit factors need F with T rows and p >= 1 columns")
        if self.factor_mode == "bsw":
            if self.regressor_model == "scf":
                raise InvalidConfig("bsw factors are defined from mu_x and cannot feed scf regressors")
            bad = [c for c in self.bsw_template if c not in BSW_COLUMNS]
            if bad or not self.bsw_template:
                raise InvalidConfig(f"bsw_template entries must be among {BSW_COLUMNS}")
            lam = _arr(self.bsw_lambda, 2, "bsw_lambda")
            m = self.bsw_psi().shape[1]
            if lam is None or lam.shape[0] != m:
                raise InvalidConfig(f"bsw_lambda must have m={m} rows")
        if self.regressor_model == "scf" and self.factor_mode == "none":
            raise InvalidConfig("scf regressors need factors")

        p = self.p
        if p:
            mean = _arr(self.loading_mean, 1, "loading_mean")
            if mean is not None and mean.shape != (p,):
                raise InvalidConfig(f"loading_mean must have p={p} entries")
            cov = _arr(self.loading_cov, 2, "loading_cov")
            if cov is not None:
                if cov.shape != (p, p):
                    raise InvalidConfig(f"loading_cov must be {p}x{p}")
                _psd_root(cov, "loading_cov")
            link = _arr(self.loading_link, 2, "loading_link")
            if link is not None and link.shape != (q, p):
                raise InvalidConfig(f"loading_link must be {q}x{p}")

        if self.regressor_model == "general":
            mu = self.mu_x_matrix()
            if mu.shape != (T, k):
                raise InvalidConfig(f"mu_x must be {T}x{k}")
            xl = _arr(self.x_link, 2, "x_link")
            if xl is not None and xl.shape != (q, k):
                raise InvalidConfig(f"x_link must be {q}x{k}")
        elif self.regressor_model == "scf":
            gm = _arr(self.gamma_x_mean, 2, "gamma_x_mean")
            if gm is None or gm.shape != (p, k):
                raise InvalidConfig(f"gamma_x_mean must be {p}x{k}")
            gl = _arr(self.gamma_x_link, 3, "gamma_x_link")
            if gl is not None and gl.shape != (q, p, k):
                raise InvalidConfig(f"gamma_x_link must be {q}x{p}x{k}")
        else:
            rho = _arr(self.cohort_fractions, 1, "cohort_fractions")
            st = _arr(self.cohort_starts, 1, "cohort_starts")
            if rho is None or st is None or rho.shape != (k,) or st.shape != (k,):
                raise InvalidConfig("staggered regressors need k cohort_fractions and cohort_starts")
            if np.any(rho <= 0) or np.any(rho >= 1):
                raise InvalidConfig("cohort fractions must lie in (0, 1)")
            if np.any(st < 1) or np.any(st > T) or np.any(st != np.round(st)):
                raise InvalidConfig("cohort starts must be integer periods in 1..T")
            if not -1.0 < float(self.cohort_link) < 1.0:
                raise InvalidConfig("cohort_link must lie in (-1, 1)")

        sc = _arr(self.slope_cov, 2, "slope_cov")
        if sc is not None:
            if sc.shape != (k, k):
                raise InvalidConfig(f"slope_cov must be {k}x{k}")
            _psd_root(sc, "slope_cov")
        sl = _arr(self.slope_link, 2, "slope_link")
        if sl is not None and sl.shape != (q, k):
            raise InvalidConfig(f"slope_link must be {q}x{k}")
        sq = _arr(self.slope_quad, 1, "slope_quad")
        if sq is not None and sq.shape != (k,):
            raise InvalidConfig(f"slope_quad must have k={k} entries")

        if self.D is not None:
            D = _arr(self.D, 2, "D")
            if D.shape[0] != T or D.shape[1] < 1:
                raise InvalidConfig("D must be T x r with r >= 1")
            r = D.shape[1]
            al = _arr(self.alpha, 1, "alpha")
            if al is None or al.shape != (r,):
                raise InvalidConfig(f"alpha must have r={r} entries")
            ac = _arr(self.alpha_cov, 2, "alpha_cov")
            if ac is not None:
                if ac.shape != (r, r):
                    raise InvalidConfig(f"alpha_cov must be {r}x{r}")
                _psd_root(ac, "alpha_cov")
        elif self.alpha is not None:
            raise InvalidConfig("alpha given without D")

    # -- serialization -------------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))  # tuples become lists

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown DgpConfig keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None

    def replace(self, **changes) -> "DgpConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return DgpConfig(**d)


@dataclass(eq=False)
class DgpTruth:
    """Population quantities and, if recorded, the per-unit draws."""

    beta: np.ndarray
    alpha: np.ndarray
    F: np.ndarray
    mu_x: np.ndarray
    psi: np.ndarray | None = None
    gamma: np.ndarray | None = None  # (N, p)
    b: np.ndarray | None = None  # (N, k)
    a: np.ndarray | None = None  # (N, r)
    e: np.ndarray | None = None  # (N, T)
    h: np.ndarray | None = None  # (N, q)
    D: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if v is None else np.asarray(v).tolist()
        return out


class _Layout:
    """Column offsets of the per-unit normal draws."""

    def __init__(self, cfg: DgpConfig):
        T, k, q, p, r = cfg.T, cfg.k, cfg.q, cfg.p, cfg.r
        sizes = [("h", q), ("gamma", p), ("v", T * k), ("e", T), ("b", k), ("a", r)]
        if cfg.regressor_model == "scf":
            sizes.append(("gx", p * k))
        if cfg.regressor_model == "staggered":
            sizes.append(("cohort", k))
        self.slices = {}
        pos = 0
        for name, n in sizes:
            self.slices[name] = slice(pos, pos + n)
            pos += n
        self.width = pos


def unit_normals(seed: int, N: int, width: int, *, jobs: int = 1) -> np.ndarray:
    """``N x width`` standard normals, row ``i`` a function of ``(seed, i)`` only."""
    n_blocks = -(-N // BLOCK_UNITS)
    ss_seed = int(seed)

    def block(b: int) -> np.ndarray:
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(ss_seed, spawn_key=(b,))))
        return gen.standard_normal((BLOCK_UNITS, width))

    if jobs > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(block, range(n_blocks)))
    else:
        parts = [block(b) for b in range(n_blocks)]
    Z = np.concatenate(parts, axis=0) if parts else np.zeros((0, width))
    return Z[:N]


def _ar1(z: np.ndarray, rho: float) -> np.ndarray:
    """Stationary unit-variance AR(1) along axis 1 from iid normals ``z``."""
    if rho == 0.0:
        return z
    out = np.empty_like(z)
    out[:, 0] = z[:, 0]
    c = np.sqrt(1.0 - rho * rho)
    for t in range(1, z.shape[1]):
        out[:, t] = rho * out[:, t - 1] + c * z[:, t]
    return out


def generate(config: DgpConfig, N: int, seed: int | None = None, *, record: bool = True,
             jobs: int = 1) -> tuple[PanelDataset, DgpTruth]:
    """Draw a panel of ``N`` units.

    Parameters
    ----------
    config : DgpConfig
    N : int
    seed : int, optional
        Defaults to ``config.seed``.
    record : bool
        Keep per-unit loadings, slopes and errors in the truth.
    jobs : int
        Threads for drawing random blocks; the panel does not depend on it.
    """
    cfg = config
    if int(N) < 2:
        raise InvalidConfig("N must be >= 2")
    N = int(N)
    seed = cfg.seed if seed is None else seed
    if int(seed) < 0:
        raise InvalidConfig("seed must be non-negative")
    T, k, q, p, r = cfg.T, cfg.k, cfg.q, cfg.p, cfg.r
    lay = _Layout(cfg)
    Z = unit_normals(seed, N, lay.width, jobs=jobs)
    s = lay.slices
    h = Z[:, s["h"]]

    F = cfg.factor_matrix()
    mu_x = cfg.mu_x_matrix()

    # loadings
    if p:
        gamma = np.zeros((N, p))
        if cfg.loading_cov is not None:
            gamma = Z[:, s["gamma"]] @ _psd_root(np.asarray(cfg.loading_cov), "loading_cov")
        if cfg.loading_mean is not None:
            gamma = gamma + np.asarray(cfg.loading_mean)
        if cfg.loading_link is not None:
            gamma = gamma + h @ np.asarray(cfg.loading_link)
    else:
        gamma = np.zeros((N, 0))

    # slopes
    zb = Z[:, s["b"]]
    b = np.zeros((N, k))
    if cfg.slope_cov is not None:
        b = b + zb @ _psd_root(np.asarray(cfg.slope_cov), "slope_cov")
    if cfg.slope_link is not None:
        b = b + h @ np.asarray(cfg.slope_link)
    if cfg.slope_quad is not None:
        b = b + (h[:, :1] ** 2 - 1.0) * np.asarray(cfg.slope_quad)[None, :]

    # regressors
    if cfg.regressor_model == "staggered":
        c = float(cfg.cohort_link)
        w = c * h[:, :1] + np.sqrt(1.0 - c * c) * Z[:, s["cohort"]]
        cut = _std_normal_quantile(np.asarray(cfg.cohort_fractions, dtype=np.float64))
        member = w < cut[None, :]
        t_idx = np.arange(1, T + 1)[None, :, None]
        starts = np.asarray(cfg.cohort_starts, dtype=np.float64)[None, None, :]
        X = (member[:, None, :] & (t_idx >= starts)).astype(np.float64)
    else:
        zv = Z[:, s["v"]].reshape(N, k, T)
        V = cfg.v_sd * _ar1(zv.reshape(N * k, T), float(cfg.v_rho)).reshape(N, k, T).transpose(0, 2, 1)
        if cfg.slope_var_link:
            d = float(cfg.slope_var_link)
            V = V * np.exp(d * zb[:, :1] - d * d)[:, :, None]
        if cfg.regressor_model == "general":
            X = mu_x[None, :, :] + V
            if cfg.x_link is not None:
                X = X + (h @ np.asarray(cfg.x_link))[:, None, :]
        else:
            Gam = np.asarray(cfg.gamma_x_mean)[None, :, :] + \
                cfg.gamma_x_sd * Z[:, s["gx"]].reshape(N, p, k)
            if cfg.gamma_x_link is not None:
                Gam = Gam + np.einsum("nq,qpk->npk", h, np.asarray(cfg.gamma_x_link))
            X = np.einsum("tp,npk->ntk", F, Gam) + V

    # idiosyncratic errors
    ze = Z[:, s["e"]]
    if cfg.error_model == "ar1":
        e = cfg.e_sd * _ar1(ze, float(cfg.e_rho))
    elif cfg.error_model == "het":
        e = cfg.e_sd * np.sqrt(1.0 + cfg.e_het * X[:, :, 0] ** 2) * ze
    else:
        e = cfg.e_sd * ze

    beta = np.asarray(cfg.beta, dtype=np.float64)
    y = np.einsum("ntk,nk->nt", X, beta[None, :] + b) + gamma @ F.T + e
    if r:
        D = np.asarray(cfg.D, dtype=np.float64)
        alpha = np.asarray(cfg.alpha, dtype=np.float64)
        a = np.zeros((N, r))
        if cfg.alpha_cov is not None:
            a = Z[:, s["a"]] @ _psd_root(np.asarray(cfg.alpha_cov), "alpha_cov")
        y = y + (alpha[None, :] + a) @ D.T
    else:
        D, alpha, a = np.zeros((T, 0)), np.zeros(0), np.zeros((N, 0))

    ds = PanelDataset(y, X)
    truth = DgpTruth(beta, alpha, F, mu_x, cfg.bsw_psi() if cfg.factor_mode == "bsw" else None,
                     D=D)
    if record:
        truth.gamma, truth.b, truth.a, truth.e, truth.h = gamma, b, a, e, h
    return ds, truth


def reconstruction_residual(ds: PanelDataset, truth: DgpTruth) -> np.ndarray:
    """``y_i - D alpha_i - X_i beta_i - F gamma_i - e_i`` for a recorded draw."""
    if truth.gamma is None:
        raise InvalidConfig("truth was generated without recording")
    fit = np.einsum("ntk,nk->nt", ds.X, truth.beta[None, :] + truth.b) + truth.gamma @ truth.F.T + truth.e
    if truth.D is not None and truth.D.shape[1]:
        fit = fit + (truth.alpha[None, :] + truth.a) @ truth.D.T
    return ds.y - fit


# -- presets ----------------------------------------------------------------------


def _presets() -> dict[str, tuple[DgpConfig, str]]:
    """Named configurations with the estimator each is meant for."""
    out: dict[str, tuple[DgpConfig, str]] = {}

    def add(cfg: DgpConfig, estimator: str):
        out[cfg.name] = (cfg, estimator)

    mu6 = ((1.0, 0.5), (1.4, 0.2), (0.7, 1.1), (1.9, 0.9), (1.2, 1.6), (2.3, 1.2))

    add(DgpConfig(
        name="additive-effect", T=5, k=1, beta=(1.0,), factor_mode="additive",
        loading_mean=(0.5,), loading_cov=((1.0,),), loading_link=((1.0,),),
        regressor_model="general", mu_x=tuple((0.2 * t,) for t in range(5)), x_link=((1.0,),),
        note="single additive effect correlated with x through h_i; within estimator is consistent",
    ), "FE_WITHIN")

    add(DgpConfig(
        name="staggered-binary", T=3, k=2, beta=(1.0, -0.5), factor_mode="additive",
        loading_mean=(0.0,), loading_cov=((1.0,),), loading_link=((0.8,),),
        regressor_model="staggered", cohort_fractions=(0.5, 0.25), cohort_starts=(2, 3),
        cohort_link=0.6,
        note="binary adoption indicators; cross-section means of X converge to "
             "[[0,0],[rho1,0],[rho1,rho2]]",
    ), "FE_WITHIN")

    F2 = ((1.0, 0.3), (1.2, -0.4), (0.8, 0.9), (1.5, 0.1), (0.9, -0.8), (1.3, 0.5))
    add(DgpConfig(
        name="scf-p-equals-k", T=6, k=2, beta=(1.0, 0.5), factor_mode="explicit", F=F2,
        loading_mean=(1.0, 0.5), loading_cov=((0.5, 0.0), (0.0, 0.5)), loading_link=((0.5, 0.5),),
        regressor_model="scf", gamma_x_mean=((1.0, 0.2), (0.3, 1.0)), gamma_x_sd=0.5,
        gamma_x_link=(((0.4, 0.0), (0.0, 0.4)),),
        note="strong common factors with p = k; Gamma is nonsingular so X-bar spans F",
    ), "CCEP_X")

    F3 = ((1.0, 0.3, 0.5), (1.2, -0.4, 0.1), (0.8, 0.9, -0.6), (1.5, 0.1, 0.9),
          (0.9, -0.8, 0.3), (1.3, 0.5, -0.2), (1.1, 0.0, 0.7))
    add(DgpConfig(
        name="scf-p-equals-k-plus-1", T=7, k=2, beta=(1.0, 0.5), factor_mode="explicit", F=F3,
        loading_mean=(1.0, -0.5, 0.8), loading_cov=tuple(tuple(0.3 * (i == j) for j in range(3)) for i in range(3)),
        regressor_model="scf", gamma_x_mean=((1.0, 0.2), (0.3, 1.0), (0.0, 0.0)), gamma_x_sd=0.5,
        note="one more factor than regressors; C = (gamma, Gamma) is nonsingular so "
             "(y-bar, X-bar) has rank k + 1",
    ), "CCEP_XY")

    add(DgpConfig(
        name="bsw-intercept-trend", T=7, k=1, beta=(1.0,), factor_mode="bsw",
        bsw_template=("const", "trend", "mean_x"), bsw_lambda=((1.0, 0.0), (0.0, 0.3), (0.5, 1.0)),
        loading_mean=(0.5, 0.5), loading_cov=((0.5, 0.1), (0.1, 0.5)), loading_link=((0.6, 0.3),),
        regressor_model="general", mu_x=tuple((1.0 + 0.8 * np.sin(t),) for t in range(1, 8)),
        x_link=((1.0,),),
        note="factors are linear in (1, t, mu_x); CCEP_X_PLUS_TREND removes them",
    ), "CCEP_X_PLUS_TREND")

    slopes_common = dict(
        T=5, k=1, beta=(1.0,), factor_mode="additive",
        loading_mean=(0.0,), loading_cov=((1.0,),), loading_link=((1.0,),),
        regressor_model="general", mu_x=((0.5,), (1.0,), (0.2,), (1.4,), (0.9,)), x_link=((1.0,),),
        slope_cov=((0.25,),), e_sd=1.0,
    )
    add(DgpConfig(
        name="random-slopes-mean-independent", slope_link=((0.5,),), slope_quad=(0.3,),
        note="x = mu + h_i + v; slopes depend on h_i only, which the intercept removes",
        **slopes_common,
    ), "CCEP_X_PLUS_INTERCEPT")
    add(DgpConfig(
        name="random-slopes-variance-linked", slope_link=((0.5,),), slope_var_link=0.4,
        note="within variance of x scales with exp(delta z_b): E(Xdot'Xdot b) != 0",
        **slopes_common,
    ), "CCEP_X_PLUS_INTERCEPT")

    add(DgpConfig(
        name="ideal-homoskedastic", T=6, k=2, beta=(1.0, 0.5), factor_mode="none",
        regressor_model="general", mu_x=mu6, x_link=((0.8, -0.4),), v_sd=1.0,
        D=((1.0,), (0.0,), (0.0,), (1.0,), (0.0,), (1.0,)), alpha=(1.5,), e_sd=1.0,
        note="u_i = e_i iid homoskedastic, no factors; alpha shifts mu_y off the span of mu_x",
    ), "CCEP_X")

    bsw_common = dict(
        T=6, k=2, beta=(1.0, 0.5), factor_mode="bsw", bsw_template=("mean_x",),
        bsw_lambda=((1.0, 0.0), (0.0, 1.0)), regressor_model="general", mu_x=mu6,
        v_sd=1.0, latent_dim=2,
    )
    add(DgpConfig(
        name="re-style-orthogonal", loading_mean=(1.0, 1.0), loading_cov=((1.0, 0.0), (0.0, 1.0)),
        x_link=((1.0, 0.0), (0.0, 1.0)), e_sd=0.5,
        note="loadings independent of X: E[u_i kron (X_i - mu_x)] = 0",
        **bsw_common,
    ), "CCEP_X")
    add(DgpConfig(
        name="correlated-loadings-bsw", loading_mean=(1.0, 1.0),
        loading_cov=((0.2, 0.0), (0.0, 0.2)), loading_link=((1.5, 0.0), (0.0, 1.5)),
        x_link=((1.0, 0.0), (0.0, 1.0)), e_sd=0.25,
        note="F = mu_x with loadings driven by the same latent that shifts X; the proxy "
             "estimation error feeds into the slope estimator",
        **bsw_common,
    ), "CCEP_X")
    return out


def presets() -> dict[str, DgpConfig]:
    """Named DGP configurations."""
    return {name: cfg for name, (cfg, _) in _presets().items()}


def preset(name: str) -> DgpConfig:
    try:
        return presets()[name]
    except KeyError:
        raise InvalidConfig(f"unknown DGP preset {name!r}; choose from {sorted(presets())}") from None


def preset_estimator(name: str, proxy: str | None = None):
    """The estimator each DGP preset is designed for, as an ``EstimatorSpec``.

    ``proxy`` overrides the proxy preset name; aggregate regressors of the DGP
    are always passed on as the explicit ``D`` block.
    """
    from .estimator import EstimatorSpec

    table = _presets()
    if name not in table:
        raise InvalidConfig(f"unknown DGP preset {name!r}")
    cfg, default = table[name]
    label = (proxy or default).upper()
    return EstimatorSpec.preset(label, cfg.D, label)
