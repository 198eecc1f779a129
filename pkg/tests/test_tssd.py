import json
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from koopsub.dictionary import evaluate, monomial_dictionary, orthonormalize_on_data
from koopsub.koopman import edmd_fit, rrmse
from koopsub.linalg import (
    InputError,
    RankDeficiencyError,
    contains,
    epsilon_apart_measure,
    is_orthonormal,
    range_basis,
)
from koopsub.ssd import ssd
from koopsub.systems import hopf, sample_snapshots
from koopsub.tssd import (
    ZERO_EPSILON_SURROGATE,
    TssdConfig,
    symmetric_intersection,
    tssd,
    tssd_efficient,
    tssd_monotone,
    tssd_plain,
)

from conftest import make_instance, random_orthonormal
from test_ssd import toy_linear_dictionary

VARIANTS = ("plain", "efficient", "monotone")


def _hopf_matrices(N):
    spec = hopf()
    data = sample_snapshots(spec, N, seed=3)
    d = orthonormalize_on_data(monomial_dictionary(2, 6, domain=spec.domain), data.X)
    return evaluate(d, data.X), evaluate(d, data.Y)


@pytest.fixture(scope="module")
def hopf_small():
    return _hopf_matrices(2000)


@pytest.fixture(scope="module")
def hopf_tiny():
    # the plain variant eigen-decomposes an N x N matrix every iteration
    return _hopf_matrices(300)


@pytest.fixture
def hopf_for(request, hopf_small, hopf_tiny):
    return hopf_tiny if request.node.callspec.params["variant"] == "plain" else hopf_small


class TestSymmetricIntersection:
    def test_full_space(self, rng):
        A, B = rng.standard_normal((2, 5, 3))
        E = symmetric_intersection(np.eye(5), A, B)
        assert E.shape == (3, 3)
        assert is_orthonormal(E)

    def test_orthogonal_complement(self):
        I = np.eye(5)
        E = symmetric_intersection(I[:, 3:], I[:, :2], I[:, 1:3])
        assert E.shape == (2, 0)

    def test_shared_column_needs_both_images(self):
        I = np.eye(4)
        A, B = I[:, [0, 1]], I[:, [1, 2]]
        # A f and B f inside span(e2) forces f = 0
        assert symmetric_intersection(I[:, [1]], A, B).shape == (2, 0)
        # with e3 allowed the second column combination survives
        E = symmetric_intersection(I[:, [1, 2]], A, B)
        assert E.shape == (2, 1)
        np.testing.assert_allclose(np.abs(E[:, 0]), [0.0, 1.0], atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    def test_contains_planted_and_maps_into_V(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 12))
        p = int(rng.integers(2, n // 2 + 1))
        A, B = rng.standard_normal((2, n, p))
        q = int(rng.integers(1, p + 1))
        F = random_orthonormal(rng, p, q)
        extra = rng.standard_normal((n, int(rng.integers(0, 2))))
        V = range_basis(np.hstack([A @ F, B @ F, extra]))
        E = symmetric_intersection(V, A, B)
        assert contains(F, E)
        if E.shape[1]:
            assert is_orthonormal(E)
            assert contains(A @ E, V) and contains(B @ E, V)

    def test_rank_checks(self):
        I = np.eye(4)
        with pytest.raises(RankDeficiencyError):
            symmetric_intersection(I[:, :2], np.ones((4, 2)), I[:, :2])
        with pytest.raises(InputError):
            symmetric_intersection(I[:, :2], I[:, :2], I[:, :3])


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(epsilon=-0.1), dict(epsilon=1.5), dict(epsilon=0.1, max_iters=0), dict(epsilon=0.1, variant="x"), dict(epsilon=0.1, eigen_slack=-1)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InputError):
            TssdConfig(**kwargs)

    def test_zero_surrogate(self, caplog, rng):
        DX, DY, _ = make_instance(rng, 50, 4)
        with caplog.at_level(logging.INFO, logger="koopsub.tssd"):
            C0, _ = tssd(DX, DY, 0.0)
        assert str(ZERO_EPSILON_SURROGATE) in caplog.text or "1e-12" in caplog.text
        C1, _ = tssd(DX, DY, ZERO_EPSILON_SURROGATE)
        np.testing.assert_array_equal(C0, C1)

    def test_bare_float(self, rng):
        DX, DY, _ = make_instance(rng, 50, 4)
        a = tssd(DX, DY, 0.3)[0]
        b = tssd(DX, DY, TssdConfig(0.3))[0]
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("variant", VARIANTS)
class TestContract:
    def test_full_at_one(self, variant, hopf_for):
        DX, DY = hopf_for
        C, trace = tssd(DX, DY, TssdConfig(1.0, variant=variant))
        assert C.shape == (28, 28)
        assert trace.iters_used == 1 and trace.terminated_by == "complete"

    def test_certificates(self, variant, hopf_for):
        DX, DY = hopf_for
        rng = np.random.default_rng(0)
        for eps in (0.02, 0.05, 0.1, 0.2):
            C, trace = tssd(DX, DY, TssdConfig(eps, variant=variant, keep_history=True))
            assert C.shape[1] >= 1  # the constant survives
            A, B = DX @ C, DY @ C
            assert epsilon_apart_measure(A, B) <= eps + 1e-6
            K, _ = edmd_fit(A, B)
            for _ in range(20):
                w = rng.standard_normal(C.shape[1]) + 1j * rng.standard_normal(C.shape[1])
                assert rrmse(A, B, K, w) <= eps + 1e-6
            dims = [r.dim_C for r in trace.records]
            assert dims == sorted(dims, reverse=True)
            for Ci, Cj in zip(trace.history, trace.history[1:]):
                assert is_orthonormal(Cj, 1e-10)
                assert contains(Cj, Ci)

    def test_trace_serializable(self, variant, hopf_for):
        DX, DY = hopf_for
        _, trace = tssd(DX, DY, TssdConfig(0.05, variant=variant))
        doc = json.loads(json.dumps(trace.to_dict()))
        assert doc["iters_used"] == len(doc["records"]) == trace.iters_used
        assert doc["terminated_by"] in ("complete", "subspace_not_exist")

    def test_planted_invariant_block_survives(self, variant, rng):
        DX, DY = toy_linear_dictionary(rng)
        C_max = np.eye(8)[:, :6]
        for eps in (1e-12, 0.01, 0.1, 0.5):
            C, trace = tssd(DX, DY, TssdConfig(eps, variant=variant, keep_history=True))
            for Ci in trace.history:
                assert contains(C_max, Ci)
            K, _ = edmd_fit(DX @ C, DY @ C)
            lam = np.linalg.eigvals(K)
            for mu in np.linalg.eigvals(A2):
                assert np.min(np.abs(lam - mu)) < 1e-6


A2 = np.array([[0.9, 0.2], [-0.1, 0.7]])


@given(st.integers(0, 2**32 - 1))
def test_variants_agree_and_special_cases(seed):
    rng = np.random.default_rng(seed)
    DX, DY, _ = make_instance(rng)
    n_d = DX.shape[1]
    C_ssd = ssd(DX, DY)
    for eps in (ZERO_EPSILON_SURROGATE, 0.1, 0.3, 1.0):
        Cp, tp = tssd_plain(DX, DY, eps)
        Ce, te = tssd_efficient(DX, DY, eps)
        assert tp.iters_used <= n_d and te.iters_used <= n_d
        assert Cp.shape == Ce.shape
        if Cp.shape[1]:
            assert epsilon_apart_measure(Cp, Ce) <= 1e-8
    C1, _ = tssd(DX, DY, 1.0)
    assert epsilon_apart_measure(C1, np.eye(n_d)) <= 1e-8
    C0, _ = tssd(DX, DY, ZERO_EPSILON_SURROGATE)
    assert C0.shape == C_ssd.shape
    if C0.shape[1]:
        assert epsilon_apart_measure(C0, C_ssd) <= 1e-8


@given(st.integers(0, 2**32 - 1))
def test_ssd_span_inside_tssd_span(seed):
    rng = np.random.default_rng(seed)
    DX, DY, _ = make_instance(rng)
    C_ssd = ssd(DX, DY)
    for eps in (0.05, 0.2, 0.6):
        C, _ = tssd(DX, DY, eps)
        assert contains(C_ssd, C) if C_ssd.shape[1] else True


def test_monotone_nested(hopf_small):
    DX, DY = hopf_small
    eps_list = (0.02, 0.05, 0.1, 0.15, 0.2)
    spans = [tssd_monotone(DX, DY, e)[0] for e in eps_list]
    for small, large in zip(spans, spans[1:]):
        assert contains(small, large)
    for e, C in zip(eps_list, spans):
        assert epsilon_apart_measure(DX @ C, DY @ C) <= e + 1e-6


def test_monotone_equals_plain_without_pruning(hopf_tiny):
    DX, DY = hopf_tiny
    level = epsilon_apart_measure(DX, DY)
    Cm, tm = tssd_monotone(DX, DY, min(1.0, level + 1e-3))
    Cp, _ = tssd_plain(DX, DY, min(1.0, level + 1e-3))
    assert tm.iters_used == 1
    assert epsilon_apart_measure(Cm, Cp) <= 1e-8


def test_rank_deficient_input():
    with pytest.raises(RankDeficiencyError):
        tssd(np.ones((10, 2)), np.eye(10)[:, :2], 0.1)


def test_max_iters_exceeded(hopf_small):
    DX, DY = hopf_small
    _, trace = tssd(DX, DY, 0.05)
    assert trace.iters_used > 1
    with pytest.raises(RuntimeError):
        tssd(DX, DY, TssdConfig(0.05, max_iters=1))


def test_overrides(hopf_small):
    DX, DY = hopf_small
    _, trace = tssd_monotone(DX, DY, TssdConfig(0.2, variant="plain"), keep_history=True)
    assert trace.variant == "monotone" and trace.history
