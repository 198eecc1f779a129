import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthonormal(rng, n, k):
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return Q


def span_distance(A, B):
    """Largest principal-angle sine between two column spaces (1 if ranks differ)."""
    from koopsub.linalg import epsilon_apart_measure

    if A.shape[1] == 0 and B.shape[1] == 0:
        return 0.0
    return epsilon_apart_measure(A, B)


def make_instance(rng, N=None, n_d=None):
    """Random snapshot matrices with a planted invariant block.

    The first ``k`` coefficient directions satisfy ``range(DX C) = range(DY C)``
    exactly; the remaining columns of ``DY`` are a perturbation of a linear
    image of ``DX`` at a random scale, so intermediate epsilon values prune
    something. Returns ``(DX, DY, k)``.
    """
    N = int(rng.integers(30, 201)) if N is None else N
    n_d = int(rng.integers(2, 13)) if n_d is None else n_d
    k = int(rng.integers(0, n_d))
    R = rng.standard_normal((n_d, n_d)) + 2 * np.eye(n_d)
    DX = rng.standard_normal((N, n_d))
    inv = DX[:, :k] @ (rng.standard_normal((k, k)) + 2 * np.eye(k))
    sigma = float(rng.choice([0.02, 0.2, 1.0]))
    rest = DX[:, k:] + sigma * rng.standard_normal((N, n_d - k))
    DY = np.hstack([inv, rest])
    # hide the planted structure behind a random change of basis
    return DX @ R, DY @ R, k
