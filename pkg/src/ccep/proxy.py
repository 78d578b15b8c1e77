"""Factor proxies: declarative specs, the realized proxy matrix and its annihilator.

A proxy matrix stacks, column by column, known functions of time (intercept,
polynomial trends, arbitrary deterministic series) and cross-sectional
averages of per-unit statistics (regressor means, the outcome mean, means of
regressor products).  Each averaged column has an exact influence
representation: the column equals the cross-sectional mean of a per-unit
statistic ``H_i[:, c]``, so its per-unit influence is ``H_i[:, c] - mean``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from . import matops
from .errors import InvalidConfig, RankDeficient, TooManyProxies
from .panel import PanelDataset, unit_mean


@dataclass(frozen=True)
class Intercept:
    kind = "intercept"


@dataclass(frozen=True)
class Trend:
    """Raw polynomial trend columns ``t, t^2, ..., t^power`` with ``t = 1..T``."""

    power: int = 1
    kind = "trend"

    def __post_init__(self):
        if int(self.power) < 1:
            raise InvalidConfig("trend power must be >= 1")


@dataclass(frozen=True)
class MeanX:
    kind = "mean_x"


@dataclass(frozen=True)
class MeanY:
    kind = "mean_y"


@dataclass(frozen=True)
class MeanProduct:
    """Per-period cross-sectional mean of ``x_itj * x_itl`` (0-based ``j``, ``l``)."""

    j: int
    l: int
    kind = "mean_product"


@dataclass(frozen=True)
class Deterministic:
    values: tuple
    label: str = "d"
    kind = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


ProxyColumn = Union[Intercept, Trend, MeanX, MeanY, MeanProduct, Deterministic]
_STOCHASTIC = (MeanX, MeanY, MeanProduct)


@dataclass(frozen=True)
class ProxySpec:
    """Ordered list of proxy columns."""

    columns: tuple

    def __post_init__(self):
        cols = tuple(self.columns)
        if not cols:
            raise InvalidConfig("a proxy spec needs at least one column")
        if sum(isinstance(c, MeanX) for c in cols) > 1:
            raise InvalidConfig("MeanX may appear at most once in a proxy spec")
        for c in cols:
            if not isinstance(c, (Intercept, Trend, MeanX, MeanY, MeanProduct, Deterministic)):
                raise InvalidConfig(f"unknown proxy column {c!r}")
        object.__setattr__(self, "columns", cols)

    def __iter__(self):
        return iter(self.columns)

    def has(self, cls) -> bool:
        return any(isinstance(c, cls) for c in self.columns)

    def width(self, k: int) -> int:
        """Number of proxy columns ``m`` for a panel with ``k`` regressors."""
        m = 0
        for c in self.columns:
            if isinstance(c, MeanX):
                m += k
            elif isinstance(c, Trend):
                m += c.power
            else:
                m += 1
        return m

    @property
    def label(self) -> str:
        return ",".join(_column_token(c) for c in self.columns)

    # -- serialization ---------------------------------------------------------

    def to_list(self) -> list[dict]:
        out = []
        for c in self.columns:
            d = {"kind": c.kind}
            if isinstance(c, Trend):
                d["power"] = c.power
            elif isinstance(c, MeanProduct):
                d["indices"] = [c.j, c.l]
            elif isinstance(c, Deterministic):
                d["values"] = list(c.values)
                d["label"] = c.label
            out.append(d)
        return out

    @classmethod
    def from_list(cls, items: Iterable[dict]) -> "ProxySpec":
        cols = []
        for d in items:
            if not isinstance(d, dict) or "kind" not in d:
                raise InvalidConfig(f"proxy entry must be a mapping with 'kind': {d!r}")
            kind = d["kind"]
            if kind == "intercept":
                cols.append(Intercept())
            elif kind == "trend":
                cols.append(Trend(int(d.get("power", 1))))
            elif kind == "mean_x":
                cols.append(MeanX())
            elif kind == "mean_y":
                cols.append(MeanY())
            elif kind == "mean_product":
                idx = d.get("indices")
                if not isinstance(idx, (list, tuple)) or len(idx) != 2:
                    raise InvalidConfig("mean_product needs 'indices': [j, l]")
                cols.append(MeanProduct(int(idx[0]), int(idx[1])))
            elif kind == "deterministic":
                if "values" not in d:
                    raise InvalidConfig("deterministic proxy needs 'values'")
                cols.append(Deterministic(tuple(d["values"]), str(d.get("label", "d"))))
            else:
                raise InvalidConfig(f"unknown proxy kind {kind!r}")
        return cls(tuple(cols))


def _column_token(c) -> str:
    if isinstance(c, Intercept):
        return "const"
    if isinstance(c, Trend):
        return f"trend:{c.power}"
    if isinstance(c, MeanX):
        return "mean_x"
    if isinstance(c, MeanY):
        return "mean_y"
    if isinstance(c, MeanProduct):
        return f"prod:{c.j + 1}:{c.l + 1}"
    return f"det:{c.label}"


# -- realization ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProxyMatrix:
    """Realized proxy matrix with its annihilator.

    Attributes
    ----------
    psi_hat : ndarray (T, m)
    column_labels : tuple of str
    is_stochastic : ndarray of bool (m,)
    annihilator : ndarray (T, T)
        ``I - Psi (Psi'Psi)^{-1} Psi'``.
    proj_coef : ndarray (T, m)
        ``Psi (Psi'Psi)^{-1}``.
    condition : float
        Condition number of ``psi_hat``.
    """

    psi_hat: np.ndarray
    column_labels: tuple
    is_stochastic: np.ndarray
    annihilator: np.ndarray
    proj_coef: np.ndarray
    condition: float
    spec: ProxySpec

    @property
    def m(self) -> int:
        return self.psi_hat.shape[1]

    @property
    def T(self) -> int:
        return self.psi_hat.shape[0]


def unit_statistics(spec: ProxySpec, y: np.ndarray, X: np.ndarray):
    """Per-unit statistics ``H_i`` whose cross-sectional mean gives the proxy.

    Returns
    -------
    H : ndarray (N, T, m)
        Zero in deterministic columns.
    fixed : ndarray (T, m)
        Deterministic column values, zero in averaged columns.
    labels : list of str
    stochastic : ndarray of bool (m,)
    """
    N, T, k = X.shape
    blocks, fixed, labels, stoch = [], [], [], []
    t = np.arange(1, T + 1, dtype=np.float64)
    zeros_H = np.zeros((N, T, 1))

    def add(h, f, lab, s):
        blocks.append(h)
        fixed.append(f)
        labels.extend(lab)
        stoch.extend([s] * len(lab))

    for c in spec:
        if isinstance(c, Intercept):
            add(zeros_H, np.ones((T, 1)), ["const"], False)
        elif isinstance(c, Trend):
            pw = np.column_stack([t ** p for p in range(1, c.power + 1)])
            add(np.zeros((N, T, c.power)), pw, [f"t^{p}" for p in range(1, c.power + 1)], False)
        elif isinstance(c, Deterministic):
            v = np.asarray(c.values, dtype=np.float64)
            if v.shape != (T,):
                raise InvalidConfig(f"deterministic proxy {c.label!r} has {v.size} values, T={T}")
            add(zeros_H, v[:, None], [c.label], False)
        elif isinstance(c, MeanX):
            add(X, np.zeros((T, k)), [f"mean_x{j + 1}" for j in range(k)], True)
        elif isinstance(c, MeanY):
            add(y[:, :, None], np.zeros((T, 1)), ["mean_y"], True)
        elif isinstance(c, MeanProduct):
            if not (0 <= c.j < k and 0 <= c.l < k):
                raise InvalidConfig(f"mean_product indices ({c.j}, {c.l}) out of range for k={k}")
            add((X[:, :, c.j] * X[:, :, c.l])[:, :, None], np.zeros((T, 1)),
                [f"mean_x{c.j + 1}x{c.l + 1}"], True)
    H = np.concatenate(blocks, axis=2)
    return H, np.hstack(fixed), labels, np.array(stoch, dtype=bool)


def _check_width(spec: ProxySpec, T: int, k: int) -> int:
    m = spec.width(k)
    if m >= T:
        raise TooManyProxies(
            f"TooFewPeriods: proxy {spec.label!r} has m={m} columns but T={T}; requires T > m"
        )
    return m


def proxy_from_matrix(psi: np.ndarray, labels, stochastic, spec: ProxySpec) -> ProxyMatrix:
    """Wrap an already realized proxy matrix, checking its rank."""
    psi = np.asarray(psi, dtype=np.float64)
    rank, cond = matops.numerical_rank(psi)
    if rank < psi.shape[1]:
        raise RankDeficient("Psi_hat", cond, rank=rank, expected=psi.shape[1],
                            detail=f"proxy columns {list(labels)}")
    M = matops.residual_maker(psi, name="Psi_hat")
    C = matops.projection_coefficients(psi, name="Psi_hat")
    return ProxyMatrix(psi, tuple(labels), np.asarray(stochastic, dtype=bool), M, C, cond, spec)


def build_proxy(ds: PanelDataset, spec: ProxySpec) -> ProxyMatrix:
    """Realize ``spec`` on ``ds``: deterministic columns as given, averaged
    columns as per-period cross-sectional means.

    Raises
    ------
    TooManyProxies
        ``m >= T``.
    RankDeficient
        The realized matrix is numerically rank-deficient.
    """
    _check_width(spec, ds.T, ds.k)
    H, fixed, labels, stoch = unit_statistics(spec, ds.y, ds.X)
    psi = fixed + unit_mean(H)
    return proxy_from_matrix(psi, labels, stoch, spec)


@dataclass(frozen=True, eq=False)
class InfluenceSet:
    """Per-unit influence vectors, ``q_hat[i] = vec(H_i - H_bar)`` (length T*m)."""

    q_hat: np.ndarray  # (N, T*m)
    T: int
    m: int

    def block(self, i: int) -> np.ndarray:
        """``q_hat[i]`` reshaped to its T x m deviation matrix."""
        return matops.unvec(self.q_hat[i], self.T, self.m)


def build_influence(ds: PanelDataset, spec: ProxySpec) -> InfluenceSet:
    """Influence vectors for the proxy columns, laid out as ``vec`` of T x m."""
    _check_width(spec, ds.T, ds.k)
    H, _, _, stoch = unit_statistics(spec, ds.y, ds.X)
    dev = H - unit_mean(H)
    dev[:, :, ~stoch] = 0.0
    N, T, m = dev.shape
    # column-major vec of each T x m block: index c*T + t
    q = np.ascontiguousarray(dev.transpose(0, 2, 1)).reshape(N, m * T)
    return InfluenceSet(q, T, m)
