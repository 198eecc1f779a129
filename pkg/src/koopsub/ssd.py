"""Symmetric Subspace Decomposition.

Finds the largest subspace of ``span(D)`` whose evaluations on ``X`` and on
``Y`` have the same column space; on generic data this is the maximal
Koopman-invariant subspace contained in ``span(D)``.
"""

from __future__ import annotations

import numpy as np

from .linalg import (
    RankDeficiencyError,
    as_matrix,
    InputError,
    null_space_basis,
    range_basis,
    rank,
)

__all__ = ["ssd", "empty_basis", "is_empty_basis", "check_snapshot_matrices"]


def empty_basis(n: int) -> np.ndarray:
    """Zero-column coefficient matrix: the "no subspace" result."""
    return np.zeros((n, 0))


def is_empty_basis(C) -> bool:
    return np.asarray(C).shape[1] == 0


def check_snapshot_matrices(DX, DY, rtol=None) -> tuple[np.ndarray, np.ndarray]:
    """Validate shapes and full column rank of ``D(X)`` and ``D(Y)``."""
    DX = as_matrix(DX, "DX")
    DY = as_matrix(DY, "DY")
    if DX.shape != DY.shape:
        raise InputError(f"shape mismatch: DX {DX.shape} vs DY {DY.shape}")
    for name, M in (("D(X)", DX), ("D(Y)", DY)):
        r = rank(M, rtol)
        if r < M.shape[1]:
            raise RankDeficiencyError(f"{name} has rank {r} < {M.shape[1]} columns")
    return DX, DY


def ssd(DX, DY, rtol: float | None = None, full_output: bool = False):
    """Symmetric Subspace Decomposition of a dictionary on snapshot data.

    Parameters
    ----------
    DX, DY : array_like, shape (N, N_d)
        Dictionary evaluated on the snapshots ``X`` and ``Y``; both must have
        full column rank.
    rtol : float, optional
        Relative singular-value cutoff for the null-space computations.
    full_output : bool
        Also return the number of iterations.

    Returns
    -------
    C : ndarray, shape (N_d, q)
        Orthonormal columns with ``range(DX C) = range(DY C)``; ``q = 0`` when
        only the trivial subspace qualifies.
    n_iter : int
        Only when ``full_output`` is true.
    """
    A, B = check_snapshot_matrices(DX, DY, rtol)
    n_d = A.shape[1]
    C = np.eye(n_d)
    n_iter = 0
    while True:
        n_iter += 1
        p = A.shape[1]
        Z = null_space_basis(np.hstack([A, B]), rtol)
        if Z.shape[1] == 0:
            C = empty_basis(n_d)
            break
        Z_A = Z[:p]
        if p <= Z_A.shape[1]:
            break
        # any basis of range(Z_A) reduces to the same subspace; an
        # orthonormal one keeps A, B and C well conditioned
        Q = range_basis(Z_A, rtol)
        C = C @ Q
        A = A @ Q
        B = B @ Q
        if n_iter > n_d:
            raise RuntimeError("SSD failed to terminate within N_d iterations")
    return (C, n_iter) if full_output else C
