"""Rank-revealing dense linear algebra and subspace operations.

Every routine here treats a matrix with zero columns as a legitimate value:
it is how an empty subspace (the "no basis exists" outcome of the subspace
algorithms) is carried around.

Rank decisions use a relative singular-value cutoff: a singular value
``s_i`` is treated as zero when ``s_i <= rtol * s_max``. When ``rtol`` is not
given it defaults to ``1e-10 * max(rows, cols)``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "InputError",
    "RankDeficiencyError",
    "default_rtol",
    "as_matrix",
    "rank",
    "range_basis",
    "null_space_basis",
    "projector_apply",
    "subspace_intersection",
    "epsilon_apart_measure",
    "contains",
    "same_span",
    "is_orthonormal",
    "svd",
]

RTOL_FACTOR = 1e-10
CONTAINMENT_TOL = 1e-8


class InputError(ValueError):
    """Raised for malformed matrices (non-finite entries, wrong rank)."""


class RankDeficiencyError(InputError):
    """Raised when a full-column-rank precondition does not hold."""


def default_rtol(shape: tuple[int, ...]) -> float:
    return RTOL_FACTOR * max(max(shape), 1)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a 2-D float array, rejecting NaN/Inf entries."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


def _resolve_rtol(rtol: float | None, shape) -> float:
    if rtol is None:
        return default_rtol(shape)
    if not 0.0 < rtol < 1.0:
        raise InputError(f"relative rank tolerance must lie in (0, 1), got {rtol}")
    return float(rtol)


def _numerical_rank(s: np.ndarray, rtol: float) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def svd(M, full_matrices: bool = False, compute_uv: bool = True):
    """SVD through LAPACK ``gesdd``, retried with ``gesvd`` if it fails to converge.

    The divide-and-conquer driver occasionally reports non-convergence on
    large, highly clustered spectra; the QR-iteration driver is slower but
    robust there.
    """
    try:
        return np.linalg.svd(M, full_matrices=full_matrices, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(
            M, full_matrices=full_matrices, compute_uv=compute_uv, lapack_driver="gesvd"
        )


def rank(M, rtol: float | None = None) -> int:
    """Numerical rank of ``M`` under the relative cutoff."""
    M = as_matrix(M)
    if M.size == 0:
        return 0
    s = svd(M, compute_uv=False)
    return _numerical_rank(s, _resolve_rtol(rtol, M.shape))


def range_basis(M, rtol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of ``M``.

    Parameters
    ----------
    M : array_like, shape (n, p)
    rtol : float, optional
        Relative singular-value cutoff.

    Returns
    -------
    Q : ndarray, shape (n, r)
        ``Q.T @ Q = I`` and ``range(Q) = range(M)``; ``r = 0`` when ``M`` is
        numerically zero or has no columns.
    """
    M = as_matrix(M)
    n, p = M.shape
    if p == 0 or n == 0:
        return np.zeros((n, 0))
    U, s, _ = svd(M)
    r = _numerical_rank(s, _resolve_rtol(rtol, M.shape))
    return U[:, :r].copy()


def null_space_basis(M, rtol: float | None = None) -> np.ndarray:
    """Orthonormal basis of ``{v : M v = 0}``.

    Returns an ``(p, 0)`` array when the null space is trivial.
    """
    M = as_matrix(M)
    n, p = M.shape
    if p == 0:
        return np.zeros((0, 0))
    if n == 0:
        return np.eye(p)
    _, s, Vh = svd(M, full_matrices=n < p)
    r = _numerical_rank(s, _resolve_rtol(rtol, M.shape))
    return Vh[r:].T.copy()


def projector_apply(M, v, rtol: float | None = None) -> np.ndarray:
    """Orthogonal projection of ``v`` onto ``range(M)``.

    Uses a rank-truncated orthonormal factor of ``M``; no pseudo-inverse is
    ever formed. ``v`` may be a vector or a matrix of column vectors.
    """
    Q = range_basis(M, rtol)
    v = np.asarray(v)
    if v.shape[0] != Q.shape[0]:
        raise InputError(f"dimension mismatch: {Q.shape[0]} rows vs vector of length {v.shape[0]}")
    return Q @ (Q.T @ v)


def _require_full_column_rank(M: np.ndarray, name: str, rtol) -> None:
    if M.shape[1] and rank(M, rtol) < M.shape[1]:
        raise RankDeficiencyError(f"{name} ({M.shape[0]}x{M.shape[1]}) is not full column rank")


def subspace_intersection(A, B, rtol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the intersection of two column spaces.

    Splits an orthonormal null-space basis of ``[A, B]`` into its top block
    ``Z_A`` (``A.shape[1]`` rows) and bottom block ``Z_B``. For full column rank
    ``A`` and ``B``, ``range(A @ Z_A) = range(A) & range(B)`` and both blocks have
    full column rank.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise InputError(f"row mismatch: {A.shape[0]} vs {B.shape[0]}")
    _require_full_column_rank(A, "A", rtol)
    _require_full_column_rank(B, "B", rtol)
    Z = null_space_basis(np.hstack([A, B]), rtol)
    p = A.shape[1]
    return Z[:p], Z[p:]


def epsilon_apart_measure(A, B, rtol: float | None = None) -> float:
    """Smallest ``eps`` for which ``range(A)`` and ``range(B)`` are eps-apart.

    This is the largest absolute eigenvalue of ``P_A - P_B``. The eigenproblem
    is solved on an orthonormal basis ``H`` of ``range(A) + range(B)``, since
    every eigenvector with a nonzero eigenvalue lives there.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise InputError(f"row mismatch: {A.shape[0]} vs {B.shape[0]}")
    QA = range_basis(A, rtol)
    QB = range_basis(B, rtol)
    if QA.shape[1] == 0 and QB.shape[1] == 0:
        return 0.0
    H = range_basis(np.hstack([QA, QB]), rtol)
    SA = H.T @ QA
    SB = H.T @ QB
    G = SA @ SA.T - SB @ SB.T
    lam = np.linalg.eigvalsh(0.5 * (G + G.T))
    return float(min(1.0, np.abs(lam).max()))


def contains(A, B, tol: float = CONTAINMENT_TOL, rtol: float | None = None) -> bool:
    """True when ``range(A)`` is contained in ``range(B)``.

    Test: ``||(I - P_B) A||_2 <= tol * ||A||_2``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] == 0:
        return True
    norm_a = np.linalg.norm(A, 2)
    if norm_a == 0.0:
        return True
    QB = range_basis(B, rtol)
    residual = A - QB @ (QB.T @ A)
    return bool(np.linalg.norm(residual, 2) <= tol * norm_a)


def same_span(A, B, tol: float = CONTAINMENT_TOL, rtol: float | None = None) -> bool:
    """Mutual containment of the column spaces of ``A`` and ``B``."""
    return contains(A, B, tol, rtol) and contains(B, A, tol, rtol)


def is_orthonormal(Q, tol: float = 1e-10) -> bool:
    Q = np.asarray(Q)
    if Q.ndim != 2:
        return False
    if Q.shape[1] == 0:
        return True
    return bool(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() <= tol)
