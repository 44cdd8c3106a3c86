"""Spanning condition, distance to the hedonic manifold and shadow-price solves."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from habitlens.dynamic import run_test
from habitlens.errors import DegeneratePrices, NoExactSolution
from habitlens.hedonic import ActiveSlice, Technology, active_slice
from habitlens.structural import (distance_to_manifold, evaluated_dates, null_space, rank_condition,
                                  retained_dates, solve_shadow_prices, structural_verdict)
from habitlens.synth import GeneratorConfig, generate_rationalisable, generate_structural_violation


def slice_of(B_tilde, rho, B=None) -> ActiveSlice:
    B_tilde = np.asarray(B_tilde, dtype=float)
    B = B_tilde.T if B is None else np.asarray(B, dtype=float)
    return ActiveSlice(np.arange(B_tilde.shape[0]), B, np.zeros((0, B.shape[1])), B_tilde,
                       np.asarray(rho, dtype=float))


class TestRankCondition:
    def test_collinear(self):
        assert rank_condition(slice_of([[1], [2]], [3, 6]))

    def test_not_collinear(self):
        assert not rank_condition(slice_of([[1], [2]], [3, 5]))

    def test_identity_always_spans(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            K = int(rng.integers(1, 8))
            sl = active_slice(Technology(np.eye(K)), np.ones(K), rng.uniform(0.1, 5, K))
            assert rank_condition(sl)
            assert distance_to_manifold(sl) == 0.0


class TestDistance:
    def test_in_span(self):
        assert distance_to_manifold(slice_of([[1], [2]], [3, 6])) == 0.0

    def test_hand_value(self):
        # normal equations: θ = (1·3 + 2·5) / 5 = 2.6, residual (0.4, -0.2)
        d = distance_to_manifold(slice_of([[1], [2]], [3, 5]))
        assert d == pytest.approx(np.hypot(0.4, 0.2) / np.hypot(3, 5), abs=1e-12)
        assert d == pytest.approx(0.0767, abs=1e-4)

    def test_orthogonal(self):
        assert distance_to_manifold(slice_of([[1], [0]], [0, 1])) == pytest.approx(1.0)

    def test_zero_prices(self):
        with pytest.raises(DegeneratePrices):
            distance_to_manifold(slice_of([[1], [2]], [0, 0]))

    @given(st.integers(1, 4), st.integers(2, 7), st.floats(0.01, 100), st.data())
    def test_scale_invariance_and_habit_independence(self, J, K, c, data):
        A = data.draw(arrays(float, (J, K), elements=st.floats(0.1, 3)))
        rho = data.draw(arrays(float, K, elements=st.floats(0.1, 5)))
        x = np.ones(K)
        with_h = active_slice(Technology(A, tuple(range(J))), x, rho)
        without = active_slice(Technology(A), x, rho)
        scaled = active_slice(Technology(A, (0,)), x, c * rho)
        d = distance_to_manifold(with_h)
        assert 0.0 <= d <= 1.0
        assert d == distance_to_manifold(without)
        assert distance_to_manifold(scaled) == pytest.approx(d, abs=1e-9)
        assert rank_condition(with_h) == (d == 0.0)


class TestShadowPrices:
    def test_min_norm(self):
        theta = solve_shadow_prices(slice_of([[1, 1]], [2], B=[[1]]))
        np.testing.assert_allclose(theta, [1, 1])

    def test_identity(self):
        rho = np.array([1.0, 2.5, 0.3])
        np.testing.assert_allclose(solve_shadow_prices(slice_of(np.eye(3), rho)), rho)

    def test_no_solution(self):
        with pytest.raises(NoExactSolution):
            solve_shadow_prices(slice_of([[1], [2]], [3, 5]))

    def test_null_space_shift(self):
        Bt = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
        sl = slice_of(Bt, [2.0, 3.0], B=Bt[:, :2].T)
        theta = solve_shadow_prices(sl)
        N = null_space(Bt)
        for w in np.random.default_rng(1).normal(size=(5, N.shape[1])):
            np.testing.assert_allclose(Bt @ (theta + N @ w), sl.rho, atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_spanned_prices_reproduced(self, seed):
        rng = np.random.default_rng(seed)
        J, K = int(rng.integers(1, 4)), int(rng.integers(1, 7))
        A = rng.uniform(0.1, 2, (J, K))
        rho = A.T @ rng.uniform(0.5, 2, J)
        sl = active_slice(Technology(A, (0,)), np.ones(K), rho)
        assert rank_condition(sl)
        theta = solve_shadow_prices(sl)
        assert np.linalg.norm(sl.B_tilde @ theta - rho) <= 1e-8 * np.linalg.norm(rho)


class TestVerdict:
    def test_dates(self):
        assert list(retained_dates(6)) == [1, 2, 3, 4, 5]
        assert list(evaluated_dates(6)) == [1, 2, 3, 4]
        assert list(evaluated_dates(7, 2)) == [2, 3, 4]

    def test_injected_dates_fail(self):
        case = generate_structural_violation(GeneratorConfig(K=7, J=3, J2=1, T=6, seed=4), delta=0.1,
                                             inject_dates=(2,))
        v = structural_verdict(case.panel, case.technology)
        assert v.failing_dates == (2,)
        i = v.dates.index(2)
        assert v.distances[i] == pytest.approx(0.1 / np.sqrt(1 + 0.01), rel=1e-6)
        assert not v.nc_all_pass
        assert v.to_dict()["nc_all_pass"] is False

    def test_passing_household_spans_everywhere(self):
        for seed in range(10):
            case = generate_rationalisable(GeneratorConfig(K=6, J=3, J2=1, T=5, seed=seed))
            out = run_test(case.panel, case.technology, with_certificate=False)
            assert out.passed
            assert out.structural.nc_all_pass
