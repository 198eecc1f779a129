"""Tunable Symmetric Subspace Decomposition (T-SSD).

Prunes a dictionary until the column spaces of its evaluations on ``X`` and
``Y`` are eps-apart, while keeping every Koopman-invariant subspace of the
original span. Three variants share one contract:

``plain``
    Eigen-analysis of the full ``N x N`` projection difference each iteration.
``efficient``
    Eigen-analysis restricted to ``range(A) + range(B)``, where all the useful
    eigenvectors live. Cost is linear in ``N``.
``monotone``
    Like ``efficient`` but removes one offending eigendirection per iteration,
    so the output span grows monotonically with ``eps``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import (
    InputError,
    RankDeficiencyError,
    as_matrix,
    default_rtol,
    null_space_basis,
    range_basis,
    rank,
)
from .ssd import check_snapshot_matrices, empty_basis

__all__ = [
    "TssdConfig",
    "TssdTrace",
    "IterationRecord",
    "symmetric_intersection",
    "tssd",
    "tssd_plain",
    "tssd_efficient",
    "tssd_monotone",
    "ZERO_EPSILON_SURROGATE",
    "VARIANTS",
]

log = logging.getLogger(__name__)

ZERO_EPSILON_SURROGATE = 1e-12
VARIANTS = ("plain", "efficient", "monotone")


@dataclass(frozen=True)
class TssdConfig:
    epsilon: float
    rtol: float | None = None
    eigen_slack: float = 1e-12
    max_iters: int | None = None
    variant: str = "efficient"
    keep_history: bool = False

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InputError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.eigen_slack < 0:
            raise InputError("eigen_slack must be nonnegative")
        if self.max_iters is not None and self.max_iters < 1:
            raise InputError("max_iters must be at least 1")
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")

    @property
    def effective_epsilon(self) -> float:
        return self.epsilon if self.epsilon > 0 else ZERO_EPSILON_SURROGATE


@dataclass
class IterationRecord:
    iter: int
    dim_V: int
    dim_E: int
    dim_C: int
    lambda_max_abs: float


@dataclass
class TssdTrace:
    epsilon: float
    variant: str
    records: list[IterationRecord] = field(default_factory=list)
    terminated_by: str = ""
    history: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def iters_used(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "variant": self.variant,
            "iters_used": self.iters_used,
            "terminated_by": self.terminated_by,
            "records": [asdict(r) for r in self.records],
        }


def _intersection_coefficients(V: np.ndarray, M: np.ndarray, rtol) -> np.ndarray:
    """Bottom block of null([V, M]); zero columns if the null space is trivial."""
    Z = null_space_basis(np.hstack([V, M]), rtol)
    return Z[V.shape[1]:]


def symmetric_intersection(V, A, B, rtol: float | None = None, check: bool = True) -> np.ndarray:
    """Largest ``E`` with ``range(A E)`` and ``range(B E)`` both inside ``range(V)``.

    Parameters
    ----------
    V : array_like, shape (n, m)
    A, B : array_like, shape (n, p)
        All three must have full column rank (checked unless ``check=False``).

    Returns
    -------
    E : ndarray, shape (p, q)
        Orthonormal columns, or ``q = 0`` when only the zero combination
        qualifies.
    """
    V = as_matrix(V, "V")
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    p = A.shape[1]
    if A.shape != B.shape or V.shape[0] != A.shape[0]:
        raise InputError(f"incompatible shapes V {V.shape}, A {A.shape}, B {B.shape}")
    if check:
        for name, M in (("V", V), ("A", A), ("B", B)):
            if M.shape[1] and rank(M, rtol) < M.shape[1]:
                raise RankDeficiencyError(f"{name} is not full column rank")
    if V.shape[1] == 0 or p == 0:
        return empty_basis(p)
    W_A = _intersection_coefficients(V, A, rtol)
    if W_A.shape[1] == 0:
        return empty_basis(p)
    Z_B = _intersection_coefficients(V, B @ W_A, rtol)
    if Z_B.shape[1] == 0:
        return empty_basis(p)
    return range_basis(W_A @ Z_B, rtol)


def _orthonormal_factor(M: np.ndarray, name: str, i: int, rtol) -> np.ndarray:
    Q = range_basis(M, rtol)
    if Q.shape[1] < M.shape[1]:
        raise RankDeficiencyError(
            f"iteration {i}: {name} lost column rank ({Q.shape[1]} < {M.shape[1]})"
        )
    return Q


def _select(lam: np.ndarray, vecs: np.ndarray, bound: float, single: bool) -> np.ndarray:
    if not single:
        return vecs[:, np.abs(lam) <= bound]
    k = int(np.argmax(np.abs(lam)))
    if abs(lam[k]) <= bound:
        return vecs
    return np.delete(vecs, k, axis=1)


def _plain_step(A, B, i, rtol, bound: float):
    QA = _orthonormal_factor(A, "A", i, rtol)
    QB = _orthonormal_factor(B, "B", i, rtol)
    # P_A - P_B vanishes outside range([A, B]); assembling it through a basis
    # of that range stops rounding errors in QA, QB (of order eps * cond)
    # from showing up there as tiny spurious eigenvalues
    H = range_basis(np.hstack([QA, QB]), rtol)
    SA = H.T @ QA
    SB = H.T @ QB
    G = H @ (SA @ SA.T - SB @ SB.T) @ H.T
    lam, U = np.linalg.eigh(0.5 * (G + G.T))
    return _select(lam, U, bound, single=False), float(np.abs(lam).max()) if lam.size else 0.0


def _restricted_step(A, B, i, rtol, bound: float, single: bool):
    QA = _orthonormal_factor(A, "A", i, rtol)
    QB = _orthonormal_factor(B, "B", i, rtol)
    H = range_basis(np.hstack([QA, QB]), rtol)
    SA = H.T @ QA
    SB = H.T @ QB
    G = SA @ SA.T - SB @ SB.T
    lam, W = np.linalg.eigh(0.5 * (G + G.T))
    W = _select(lam, W, bound, single)
    return H @ W, W.shape[1], float(np.abs(lam).max()) if lam.size else 0.0


def _run(DX, DY, cfg: TssdConfig):
    A, B = check_snapshot_matrices(DX, DY, cfg.rtol)
    n_d = A.shape[1]
    # One cutoff for every decomposition, scaled to the N-row data pencil.
    # The compressed coordinates of the efficient variants would otherwise get
    # a far tighter cutoff than the plain variant, and a cutoff that falls
    # inside a cluster of small singular values lets the exactly invariant
    # directions drift out of the span over the iterations.
    rtol = cfg.rtol if cfg.rtol is not None else default_rtol((A.shape[0], 2 * n_d))
    if cfg.epsilon == 0:
        log.info("epsilon = 0 replaced by %g", ZERO_EPSILON_SURROGATE)
    bound = cfg.effective_epsilon + cfg.eigen_slack
    trace = TssdTrace(epsilon=cfg.epsilon, variant=cfg.variant)

    if cfg.variant != "plain":
        # every quantity the restricted eigen-analysis touches lies in
        # range([D(X), D(Y)]); work in an orthonormal basis of it
        H1 = range_basis(np.hstack([A, B]), rtol)
        A = H1.T @ A
        B = H1.T @ B
    if cfg.max_iters is not None:
        max_iters = cfg.max_iters
    else:
        max_iters = A.shape[0] if cfg.variant == "monotone" else n_d
    max_iters = max(max_iters, 1)

    C = np.eye(n_d)
    if cfg.keep_history:
        trace.history.append(C)
    i = 0
    while True:
        i += 1
        if i > max_iters:
            raise RuntimeError(f"T-SSD exceeded {max_iters} iterations")
        if cfg.variant == "plain":
            V, lam_max = _plain_step(A, B, i, rtol, bound)
            dim_V = V.shape[1]
        else:
            V, dim_V, lam_max = _restricted_step(A, B, i, rtol, bound, cfg.variant == "monotone")
        E = symmetric_intersection(V, A, B, rtol, check=False)
        if E.shape[1] == 0:
            C = empty_basis(n_d)
        else:
            C = C @ E
            A = A @ E
            B = B @ E
        trace.records.append(IterationRecord(i, int(dim_V), E.shape[1], C.shape[1], float(lam_max)))
        if cfg.keep_history:
            trace.history.append(C)
        if E.shape[1] == 0:
            trace.terminated_by = "subspace_not_exist"
            return C, trace
        if E.shape[0] <= E.shape[1]:
            trace.terminated_by = "complete"
            return C, trace


def tssd(DX, DY, config: TssdConfig | float) -> tuple[np.ndarray, TssdTrace]:
    """Run T-SSD on the evaluated dictionary matrices.

    Parameters
    ----------
    DX, DY : array_like, shape (N, N_d)
        Dictionary evaluated on ``X`` and ``Y``; full column rank required.
    config : TssdConfig or float
        A bare float is taken as ``epsilon`` with default settings.

    Returns
    -------
    C : ndarray, shape (N_d, q)
        Orthonormal coefficient matrix of the identified subspace, ``q = 0``
        when none exists.
    trace : TssdTrace
    """
    if not isinstance(config, TssdConfig):
        config = TssdConfig(epsilon=float(config))
    return _run(DX, DY, config)


def _with_variant(config, variant: str, overrides) -> TssdConfig:
    if isinstance(config, TssdConfig):
        params = asdict(config)
    else:
        params = {"epsilon": float(config)}
    params.update(overrides)
    params["variant"] = variant
    return TssdConfig(**params)


def tssd_plain(DX, DY, config: TssdConfig | float, **overrides):
    return _run(DX, DY, _with_variant(config, "plain", overrides))


def tssd_efficient(DX, DY, config: TssdConfig | float, **overrides):
    return _run(DX, DY, _with_variant(config, "efficient", overrides))


def tssd_monotone(DX, DY, config: TssdConfig | float, **overrides):
    return _run(DX, DY, _with_variant(config, "monotone", overrides))
