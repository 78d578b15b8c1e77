"""Sandwich variance for extended CCEP with a first-stage correction.

The score of unit ``i`` is

    s_i = Xdd_i' u_i + G' J q_i,

where ``G = N^-1 sum_i u_i kron (X_i - X_bar)`` (T^2 x k),
``J = (I + K)[Psi (Psi'Psi)^{-1} kron M]`` (T^2 x Tm) and ``q_i`` is the
influence vector of the proxy matrix.  The second term accounts for the
sampling error in the estimated proxies; dropping it gives the naive
variance.  The asymptotic variance of ``sqrt(N)(beta_hat - beta)`` is
``A^-1 B A^-1`` with ``A = N^-1 sum Xdd_i'Xdd_i`` and ``B = N^-1 sum s_i s_i'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .errors import DimensionMismatch, RankDeficient
from .estimator import EstimateResult
from .panel import PanelDataset, unit_mean
from .proxy import InfluenceSet, ProxyMatrix, build_influence

# Acklam's rational approximation to the standard normal quantile
# (relative error < 1.15e-9), followed by one Halley step on erfc which brings
# the result to double precision.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Standard normal quantile ``Phi^{-1}(p)`` for ``0 < p < 1``."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # Halley refinement
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))


@dataclass(eq=False)
class VarianceResult:
    beta_hat: np.ndarray
    A_hat: np.ndarray
    G_hat: np.ndarray
    B_hat_corrected: np.ndarray
    B_hat_naive: np.ndarray
    avar_corrected: np.ndarray
    avar_naive: np.ndarray
    se_corrected: np.ndarray
    se_naive: np.ndarray
    ci_level: float
    z: float
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    ci_lower_naive: np.ndarray
    ci_upper_naive: np.ndarray
    N: int
    flags: list = field(default_factory=list)

    def covers(self, beta, naive: bool = False) -> np.ndarray:
        """Per-coefficient indicator that the interval contains ``beta``."""
        lo, hi = (self.ci_lower_naive, self.ci_upper_naive) if naive else (self.ci_lower, self.ci_upper)
        beta = np.asarray(beta, dtype=np.float64)
        return (lo <= beta) & (beta <= hi)

    def to_dict(self) -> dict:
        return {
            "ci_level": self.ci_level,
            "z": self.z,
            "se_corrected": self.se_corrected.tolist(),
            "se_naive": self.se_naive.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "ci_lower_naive": self.ci_lower_naive.tolist(),
            "ci_upper_naive": self.ci_upper_naive.tolist(),
            "avar_corrected": self.avar_corrected.tolist(),
            "avar_naive": self.avar_naive.tolist(),
            "B_hat_corrected": self.B_hat_corrected.tolist(),
            "B_hat_naive": self.B_hat_naive.tolist(),
            "A_hat": self.A_hat.tolist(),
            "flags": list(self.flags),
        }


def compute_G_hat(ds: PanelDataset, result: EstimateResult) -> np.ndarray:
    """``N^-1 sum_i u_hat_i kron (X_i - X_bar)``, shape (T^2, k).

    Row ``t*T + s`` holds ``mean_i u_hat[i, t] * (X[i, s, :] - X_bar[s, :])``.
    """
    X_dev = ds.X - unit_mean(ds.X)
    T, k = ds.T, ds.k
    G = np.einsum("nt,nsj->tsj", result.u_hat, X_dev) / ds.N
    return G.reshape(T * T, k)


def jacobian_correction(proxy: ProxyMatrix) -> np.ndarray:
    """``(I + K)[Psi (Psi'Psi)^{-1} kron M_Psi]``, shape (T^2, T*m).

    This is the differential of ``vec(Psi (Psi'Psi)^{-1} Psi')`` with respect
    to ``vec(Psi)``; the differential of ``vec(M_Psi)`` is its negative.
    """
    T = proxy.T
    core = np.kron(proxy.proj_coef, proxy.annihilator)
    K = matops.commutation_matrix(T)
    return core + K @ core


def compute_scores(ds: PanelDataset, result: EstimateResult, influence: InfluenceSet, *,
                   G_hat: np.ndarray | None = None, J: np.ndarray | None = None,
                   correction_sign: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit scores.

    Returns
    -------
    scores : ndarray (N, k)
        ``Xdd_i' u_i + correction_sign * G' J q_i``.
    naive : ndarray (N, k)
        ``Xdd_i' u_i``.

    Notes
    -----
    ``correction_sign=+1`` applies ``J`` exactly as in the score formula.
    Since ``d vec(M) = -J d vec(Psi)``, ``-1`` is the literal first-order
    expansion.  The two choices give the same ``B`` whenever the naive part
    and the correction are uncorrelated, e.g. when the idiosyncratic errors
    have mean zero given the regressors and slopes are homogeneous.
    """
    T, m = result.T, result.m
    if influence.q_hat.shape != (result.N, T * m) or influence.T != T or influence.m != m:
        raise DimensionMismatch(
            f"influence vectors have shape {influence.q_hat.shape}, expected ({result.N}, {T * m})")
    naive = np.einsum("ntk,nt->nk", result.X_ddot, result.u_hat)
    if not influence.q_hat.any():
        return naive.copy(), naive
    if G_hat is None:
        G_hat = compute_G_hat(ds, result)
    if J is None:
        J = jacobian_correction(result.proxy)
    W = G_hat.T @ J  # k x Tm, applied to every q_i without forming J q_i per unit
    return naive + correction_sign * (influence.q_hat @ W.T), naive


def _sandwich_core(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    AinvB = np.linalg.solve(A, B)
    V = np.linalg.solve(A, AinvB.T)
    return 0.5 * (V + V.T)


def _psd_flag(B: np.ndarray, name: str) -> list:
    tr = float(np.trace(B))
    ev = np.linalg.eigvalsh(0.5 * (B + B.T))
    if ev.size and ev[0] < -1e-10 * max(tr, 0.0):
        return [f"NonPsd:{name} (min eigenvalue {ev[0]:.3g})"]
    return []


def sandwich(result: EstimateResult, scores: np.ndarray, naive_scores: np.ndarray | None = None, *,
             ci_level: float = 0.95, dof_correction: bool = False,
             G_hat: np.ndarray | None = None) -> VarianceResult:
    """Assemble ``A^-1 B A^-1``, standard errors and normal confidence intervals.

    ``dof_correction`` multiplies both ``B`` matrices by ``N / (N - k - r)``.
    """
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must lie in (0, 1)")
    N, k = result.N, result.k
    A = result.A_hat
    rank, cond = matops.numerical_rank(A)
    if rank < k:
        raise RankDeficient("A_hat", cond, rank=rank, expected=k)
    if naive_scores is None:
        naive_scores = scores
    scale = N / (N - k - result.r) if dof_correction else 1.0
    B_c = scale * (scores.T @ scores) / N
    B_n = scale * (naive_scores.T @ naive_scores) / N
    B_c = 0.5 * (B_c + B_c.T)
    B_n = 0.5 * (B_n + B_n.T)
    V_c = _sandwich_core(A, B_c)
    V_n = _sandwich_core(A, B_n)
    se_c = np.sqrt(np.clip(np.diag(V_c), 0.0, None) / N)
    se_n = np.sqrt(np.clip(np.diag(V_n), 0.0, None) / N)
    z = normal_quantile(1.0 - (1.0 - ci_level) / 2.0)
    b = result.beta_hat
    flags = _psd_flag(B_c, "B_hat_corrected") + _psd_flag(B_n, "B_hat_naive")
    if G_hat is None:
        G_hat = np.zeros((result.T ** 2, k))
    return VarianceResult(b, A, G_hat, B_c, B_n, V_c, V_n, se_c, se_n, ci_level, z,
                          b - z * se_c, b + z * se_c, b - z * se_n, b + z * se_n, N, flags)


def estimate_variance(ds: PanelDataset, result: EstimateResult, *, ci_level: float = 0.95,
                      dof_correction: bool = False, correction_sign: float = 1.0) -> VarianceResult:
    """Full pipeline: influence vectors, ``G_hat``, ``J``, scores and sandwich."""
    influence = build_influence(ds, result.spec.proxy)
    G = compute_G_hat(ds, result)
    scores, naive = compute_scores(ds, result, influence, G_hat=G,
                                   correction_sign=correction_sign)
    return sandwich(result, scores, naive, ci_level=ci_level,
                    dof_correction=dof_correction, G_hat=G)
