"""Dense matrix primitives: least squares, annihilators, Kronecker algebra.

Storage convention: matrices are ``numpy.ndarray`` of float64 with the usual
(row, column) indexing.  ``vec`` stacks columns top to bottom (column-major,
Fortran order), which is the convention under which the commutation matrix
satisfies ``K @ vec(A) == vec(A.T)``.

Projections are always built from an orthogonal decomposition of the
regressor matrix; ``A'A`` is never inverted explicitly.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import RankDeficient

#: A matrix is rank-deficient when s_min / s_max falls below this value.
RANK_RTOL = 1e-10


class OlsSolution(NamedTuple):
    coefficients: np.ndarray
    rank: int
    condition: float


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")
    return arr


def _condition(s: np.ndarray) -> float:
    if s.size == 0 or s[0] == 0.0:
        return float("inf")
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def numerical_rank(a, rtol: float = RANK_RTOL) -> tuple[int, float]:
    """Return ``(rank, condition_number)`` of ``a`` from its singular values."""
    s = np.linalg.svd(_as_matrix(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, float("inf")
    return int(np.sum(s >= rtol * s[0])), _condition(s)


def ols_solve(design, rhs, *, require_full_rank: bool = True,
              name: str = "design", rtol: float = RANK_RTOL) -> OlsSolution:
    """Least squares via the thin SVD of the design.

    Parameters
    ----------
    design : array_like, shape (n, q)
    rhs : array_like, shape (n,) or (n, c)
        Each column is fitted separately.
    require_full_rank : bool
        Raise :class:`RankDeficient` when the numerical rank is below ``q``.
        Otherwise the minimum-norm solution is returned.

    Returns
    -------
    OlsSolution
        ``coefficients`` has shape ``(q,)`` for 1-D ``rhs`` and ``(q, c)``
        otherwise; ``condition`` is ``s_max / s_min``.
    """
    X = _as_matrix(design, "design")
    y = np.asarray(rhs, dtype=np.float64)
    vector_rhs = y.ndim == 1
    Y = y[:, None] if vector_rhs else y
    n, q = X.shape
    if Y.shape[0] != n:
        raise ValueError(f"rhs has {Y.shape[0]} rows, design has {n}")
    if n < q:
        raise RankDeficient(name, float("inf"), rank=n, expected=q,
                            detail="fewer rows than columns")

    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    cond = _condition(s)
    rank = int(np.sum(s >= rtol * s[0])) if s[0] > 0 else 0
    if rank < q and require_full_rank:
        raise RankDeficient(name, cond, rank=rank, expected=q)

    inv_s = np.zeros_like(s)
    inv_s[:rank] = 1.0 / s[:rank]
    coef = Vt.T @ (inv_s[:, None] * (U.T @ Y))
    return OlsSolution(coef[:, 0] if vector_rhs else coef, rank, cond)


def orthonormal_basis(a, *, name: str = "A", rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (T x m) for the column space of a full-rank ``a``."""
    A = _as_matrix(a, name)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    m = A.shape[1]
    rank = int(np.sum(s >= rtol * s[0])) if s.size and s[0] > 0 else 0
    if rank < m:
        raise RankDeficient(name, _condition(s), rank=rank, expected=m)
    return U


def residual_maker(a, *, name: str = "A", rtol: float = RANK_RTOL) -> np.ndarray:
    """Annihilator ``M_A = I - A (A'A)^{-1} A'`` for full-column-rank ``a``.

    Built as ``I - U U'`` from the thin SVD of ``a``, so the result is
    symmetric and idempotent to rounding error.
    """
    U = orthonormal_basis(a, name=name, rtol=rtol)
    M = np.eye(U.shape[0]) - U @ U.T
    # enforce exact symmetry
    return 0.5 * (M + M.T)


def projection_coefficients(a, *, name: str = "A", rtol: float = RANK_RTOL) -> np.ndarray:
    """Return ``A (A'A)^{-1}`` (T x m) without forming ``(A'A)^{-1}``.

    With ``A = U S V'`` this equals ``U S^{-1} V'``.
    """
    A = _as_matrix(a, name)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    m = A.shape[1]
    rank = int(np.sum(s >= rtol * s[0])) if s.size and s[0] > 0 else 0
    if rank < m:
        raise RankDeficient(name, _condition(s), rank=rank, expected=m)
    return (U / s) @ Vt


def kron(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` is ``a[i, j] * b``."""
    return np.kron(_as_matrix(a, "a"), _as_matrix(b, "b"))


def vec(a) -> np.ndarray:
    """Stack the columns of ``a`` into one vector, first column first."""
    return np.asarray(a, dtype=np.float64).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=np.float64)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def commutation_matrix(T: int) -> np.ndarray:
    """The ``T^2 x T^2`` permutation ``K`` with ``K vec(A) = vec(A')``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    idx = np.arange(T * T)
    # vec(A)[j*T + i] = A[i, j] must land at vec(A')[i*T + j]
    i, j = idx % T, idx // T
    K = np.zeros((T * T, T * T))
    K[i * T + j, idx] = 1.0
    return K
