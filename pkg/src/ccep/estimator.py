"""Extended CCEP estimation by unit-level partialling of a proxy matrix.

For a proxy matrix ``Psi_hat`` with annihilator ``M``, the slope estimator is
pooled OLS of ``y_i`` on ``Xdd_i = M X_i``.  Aggregate regressors ``D`` (time
dummies, trends, macro series) are handled afterwards: whenever the regressor
means are among the proxies, ``sum_i M X_i = N M X_bar = 0`` and the slopes do
not depend on ``D`` at all, so ``D`` only enters through its own coefficient.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import matops
from .errors import CcepError, InvalidConfig, RankDeficient, TooFewPeriods
from .panel import PanelDataset, unit_mean
from .proxy import Intercept, MeanX, MeanY, ProxyMatrix, ProxySpec, Trend, build_proxy

#: Units per work chunk.  Fixed so reductions never depend on the worker count.
CHUNK_UNITS = 8192

PRESETS = {
    "CCEP_X": (MeanX(),),
    "CCEP_XY": (MeanX(), MeanY()),
    "FE_WITHIN": (Intercept(),),
    "DETREND": (Intercept(), Trend(1)),
    "CCEP_X_PLUS_INTERCEPT": (Intercept(), MeanX()),
    "CCEP_X_PLUS_TREND": (Intercept(), Trend(1), MeanX()),
}


def preset_proxy(name: str) -> ProxySpec:
    try:
        return ProxySpec(PRESETS[name.upper()])
    except KeyError:
        raise InvalidConfig(f"unknown estimator preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class EstimatorSpec:
    """Proxy spec plus optional aggregate regressors ``D``.

    ``det`` is ``None``, ``"time_dummies"``, ``"trend:p"`` or an explicit
    T x r array (nested sequences).  ``"time_dummies"`` keeps, in time order,
    each period dummy that is not redundant given the proxies, i.e. as many
    dummies as the rank condition on ``M D`` allows.
    """

    proxy: ProxySpec
    det: Any = None
    label: str = ""

    def __post_init__(self):
        det = self.det
        if isinstance(det, str):
            det = det.strip()
            if det != "time_dummies" and not det.startswith("trend"):
                raise InvalidConfig(f"unknown deterministic preset {det!r}")
            if det.startswith("trend"):
                _trend_power(det)
        elif det is not None:
            arr = np.asarray(det, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2 or arr.shape[1] == 0:
                raise InvalidConfig("explicit D must be a T x r matrix with r >= 1")
            det = tuple(tuple(float(v) for v in row) for row in arr)
        object.__setattr__(self, "det", det)
        if not self.label:
            lab = self.proxy.label
            if self.det is not None:
                lab += " | D=" + (self.det if isinstance(self.det, str) else f"{len(self.det[0])} cols")
            object.__setattr__(self, "label", lab)

    @classmethod
    def preset(cls, name: str, det=None, label: str = "") -> "EstimatorSpec":
        return cls(preset_proxy(name), det, label or name.upper())

    def to_dict(self) -> dict:
        det = self.det
        if det is not None and not isinstance(det, str):
            det = {"values": [list(r) for r in det]}
        return {"label": self.label, "proxy": self.proxy.to_list(), "det": det}

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSpec":
        if "preset" in d:
            proxy = preset_proxy(d["preset"])
            label = d.get("label", d["preset"].upper())
        elif "proxy" in d:
            proxy = ProxySpec.from_list(d["proxy"])
            label = d.get("label", "")
        else:
            raise InvalidConfig("estimator spec needs 'proxy' or 'preset'")
        det = d.get("det")
        if isinstance(det, dict):
            if "values" not in det:
                raise InvalidConfig("explicit det block needs 'values'")
            det = det["values"]
        return cls(proxy, det, label)


def _trend_power(token: str) -> int:
    if token == "trend":
        return 1
    try:
        p = int(token.split(":", 1)[1])
    except (IndexError, ValueError):
        raise InvalidConfig(f"bad trend specification {token!r}; use trend:p") from None
    if p < 1:
        raise InvalidConfig("trend power must be >= 1")
    return p


def resolve_det(det, T: int, annihilator: np.ndarray | None = None) -> np.ndarray:
    """Turn a ``det`` entry into a T x r matrix (r may be 0)."""
    if det is None:
        return np.zeros((T, 0))
    if isinstance(det, str):
        if det.startswith("trend"):
            t = np.arange(1, T + 1, dtype=np.float64)
            return np.column_stack([t ** p for p in range(1, _trend_power(det) + 1)])
        # time dummies: greedy in time order, keep those that raise rank(M D)
        M = np.eye(T) if annihilator is None else annihilator
        keep: list[int] = []
        for t in range(T):
            cand = M[:, keep + [t]]
            if matops.numerical_rank(cand)[0] == len(keep) + 1:
                keep.append(t)
        return np.eye(T)[:, keep]
    D = np.asarray(det, dtype=np.float64)
    if D.shape[0] != T:
        raise InvalidConfig(f"explicit D has {D.shape[0]} rows but T={T}")
    return D


@dataclass(eq=False)
class EstimateResult:
    """Output of :func:`ccep_fit`.

    ``X_ddot`` holds the per-unit regressors that define ``beta_hat``:
    ``M X_i``, less ``P_Ddd M X_bar`` when ``D`` is present and the
    regressor means are not proxies;
    ``u_hat`` are model residuals ``y_i - D alpha - X_i beta`` (the proxy part
    is *not* removed).
    """

    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    X_ddot: np.ndarray
    D: np.ndarray
    D_ddot: np.ndarray
    u_hat: np.ndarray
    A_hat: np.ndarray
    proxy: ProxyMatrix
    annihilator: np.ndarray
    spec: EstimatorSpec
    N: int
    T: int
    k: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.D.shape[1]

    @property
    def m(self) -> int:
        return self.proxy.m

    @property
    def n_obs(self) -> int:
        return self.N * self.T

    @property
    def dof(self) -> int:
        """Residual degrees of freedom after unit-level partialling."""
        return self.N * (self.T - self.m) - self.k - self.r


def _chunks(N: int):
    return [(s, min(s + CHUNK_UNITS, N)) for s in range(0, N, CHUNK_UNITS)]


def _map_chunks(fn, N: int, jobs: int) -> list:
    chunks = _chunks(N)
    if jobs <= 1 or len(chunks) == 1:
        return [fn(a, b) for a, b in chunks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda ab: fn(*ab), chunks))


def partial_out(M: np.ndarray, X: np.ndarray, jobs: int = 1) -> np.ndarray:
    """``M X_i`` for every unit; ``X`` is (N, T, k) or (N, T)."""
    squeeze = X.ndim == 2
    X3 = X[:, :, None] if squeeze else X
    parts = _map_chunks(lambda a, b: np.einsum("ts,nsk->ntk", M, X3[a:b]), X3.shape[0], jobs)
    out = np.concatenate(parts, axis=0)
    return out[:, :, 0] if squeeze else out


def cross_product_sum(A: np.ndarray, B: np.ndarray, jobs: int = 1) -> np.ndarray:
    """``sum_i A_i' B_i`` accumulated chunk by chunk in a fixed order."""
    parts = _map_chunks(lambda a, b: np.einsum("ntj,ntl->jl", A[a:b], B[a:b]), A.shape[0], jobs)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def ccep_fit(ds: PanelDataset, spec: EstimatorSpec | ProxySpec, *, jobs: int = 1) -> EstimateResult:
    """Extended CCEP estimate of ``(alpha, beta)``.

    Parameters
    ----------
    ds : PanelDataset
    spec : EstimatorSpec or ProxySpec
        A bare ``ProxySpec`` means no aggregate regressors.
    jobs : int
        Threads used for the per-unit partialling; results do not depend on it.

    Raises
    ------
    TooFewPeriods
        ``T <= m``, or more aggregate regressors than ``T - m``.
    RankDeficient
        ``Psi_hat``, ``sum Xdd'Xdd`` or ``Ddd'Ddd`` is singular.
    """
    if isinstance(spec, ProxySpec):
        spec = EstimatorSpec(spec)
    proxy = build_proxy(ds, spec.proxy)
    M = proxy.annihilator
    N, T, k = ds.N, ds.T, ds.k
    m = proxy.m
    if T - m < 1:
        raise TooFewPeriods(f"TooFewPeriods: T={T} but the proxy has m={m} columns")

    D = resolve_det(spec.det, T, M)
    r = D.shape[1]
    if r > T - m:
        raise TooFewPeriods(f"TooFewPeriods: r={r} aggregate regressors exceed T - m = {T - m}")
    D_ddot = M @ D
    if r:
        s_D = np.linalg.svd(D, compute_uv=False)
        s_dd = np.linalg.svd(D_ddot, compute_uv=False)
        rank = int(np.sum(s_dd >= matops.RANK_RTOL * s_D[0])) if s_D[0] > 0 else 0
        if rank < r:
            cond = float(s_dd[0] / s_dd[-1]) if s_dd[-1] > 0 else float("inf")
            raise RankDeficient("Ddd'Ddd", cond, rank=rank, expected=r,
                                detail="aggregate regressors are spanned by the proxies")

    has_mean_x = spec.proxy.has(MeanX)
    notes: list[str] = []
    X_ddot = partial_out(M, ds.X, jobs)
    if r and not has_mean_x:
        # D carries one coefficient shared by all units; by Frisch-Waugh the
        # slopes use M X_i net of the common part P_Ddd M X_bar, which
        # vanishes whenever X_bar is among the proxies.
        shift = D_ddot @ matops.ols_solve(D_ddot, M @ unit_mean(ds.X), name="Ddd'Ddd").coefficients
        X_ddot = X_ddot - shift[None, :, :]
        notes.append("regressor means not among proxies: slopes net out the fitted D component")

    sol = matops.ols_solve(X_ddot.reshape(N * T, k), ds.y.reshape(N * T),
                           name="sum Xdd'Xdd")
    beta = sol.coefficients
    A_hat = cross_product_sum(X_ddot, X_ddot, jobs) / N

    alpha = np.zeros(r)
    alpha_numeric = np.zeros(r)
    if r:
        resid_mean = M @ (unit_mean(ds.y) - unit_mean(ds.X) @ beta)
        alpha_numeric = matops.ols_solve(D_ddot, resid_mean, name="Ddd'Ddd").coefficients
        if has_mean_x and spec.proxy.has(MeanY):
            notes.append("outcome and regressor means both partialled: alpha is identically zero")
        else:
            alpha = alpha_numeric

    u_hat = ds.y - (D @ alpha)[None, :] - np.einsum("ntk,k->nt", ds.X, beta)
    diagnostics = {
        "condition_psi": proxy.condition,
        "condition_xdd": sol.condition,
        "rank_xdd": sol.rank,
        "alpha_numeric": alpha_numeric,
        "notes": notes,
    }
    return EstimateResult(beta, alpha, X_ddot, D, D_ddot, u_hat, A_hat, proxy, M,
                          spec, N, T, k, diagnostics)


def ccep_fit_preset(ds: PanelDataset, preset: str, det=None, *, jobs: int = 1) -> EstimateResult:
    """Shortcut for the named proxy sets in :data:`PRESETS`."""
    return ccep_fit(ds, EstimatorSpec.preset(preset, det), jobs=jobs)


@dataclass
class CompareRow:
    label: str
    beta_hat: np.ndarray | None
    alpha_hat: np.ndarray | None
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.beta_hat is not None


def compare_specs(ds: PanelDataset, specs: Sequence[EstimatorSpec], *, jobs: int = 1) -> list[CompareRow]:
    """Fit every spec on the same dataset; a failing spec becomes a flagged row."""
    rows = []
    for spec in specs:
        try:
            res = ccep_fit(ds, spec, jobs=jobs)
        except CcepError as exc:
            rows.append(CompareRow(spec.label, None, None, [*exc.kinds, str(exc)]))
            continue
        rows.append(CompareRow(spec.label, res.beta_hat, res.alpha_hat,
                               list(res.diagnostics["notes"])))
    return rows
