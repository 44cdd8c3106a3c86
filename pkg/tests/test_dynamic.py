"""LP engine: feasibility, admissible β, certificates, CCEI and the cycle checker."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from habitlens.dynamic import (FULL, MISSING, Certificate, HouseholdLP, TestOutcome, admissible_beta_set,
                               afriat_feasible, ccei, check_cycles_bruteforce, default_grid, feasible_at_beta,
                               one_lag_feasible, pricing_residual, reconstruct_utility, run_test)
from habitlens.errors import TooFewPeriods
from habitlens.hedonic import Technology
from habitlens.panel import HouseholdPanel
from habitlens.synth import (GeneratorConfig, generate_behavioural_violation, generate_rationalisable,
                             generate_structural_violation)


class TestGrid:
    def test_default_grid(self):
        g = default_grid()
        assert len(g) == 51
        assert g[0] == 0.95 and g[-1] == 1.0 and g[1] == 0.951


class TestFeasibility:
    @pytest.mark.parametrize("seed", range(8))
    def test_generated_panel_feasible_at_truth(self, seed):
        case = generate_rationalisable(GeneratorConfig(K=7, J=3, J2=2, T=6, seed=seed))
        cert = feasible_at_beta(case.panel, case.technology, 0.98)
        assert cert is not None
        assert cert.afriat_violation() < 1e-6
        assert pricing_residual(cert, case.panel, case.technology) < 1e-6
        assert 0.98 in admissible_beta_set(case.panel, case.technology)

    def test_full_price_mode(self):
        case = generate_rationalisable(GeneratorConfig(K=5, J=2, J2=1, T=5, seed=3, full_prices=True))
        cert = feasible_at_beta(case.panel, case.technology, 0.98, mode=FULL)
        assert cert is not None
        assert pricing_residual(cert, case.panel, case.technology, FULL) < 1e-6

    def test_structural_failure_is_infeasible(self):
        case = generate_structural_violation(GeneratorConfig(K=7, J=3, J2=1, T=6, seed=2))
        assert feasible_at_beta(case.panel, case.technology, 0.98) is None
        out = run_test(case.panel, case.technology)
        assert not out.passed and out.ccei is None and not out.structural.nc_all_pass

    def test_too_few_periods(self, tiny_panel, identity2):
        short = HouseholdPanel.from_arrays("s", tiny_panel.X[:2], tiny_panel.P[:2], tiny_panel.goods)
        with pytest.raises(TooFewPeriods):
            feasible_at_beta(short, identity2, 1.0)

    def test_bad_beta(self, tiny_panel, identity2):
        with pytest.raises(ValueError):
            feasible_at_beta(tiny_panel, identity2, 1.2)

    def test_linear_utility_constant_prices(self):
        # Q = 0: π̃ is constant, so any quantity path is rationalised
        cfg = GeneratorConfig(K=5, J=2, J2=1, T=6, seed=1, Q=np.zeros((3, 3)))
        case = generate_rationalisable(cfg)
        assert feasible_at_beta(case.panel, case.technology, 0.98) is not None
        pt = case.certificate.pi_tilde
        np.testing.assert_allclose(pt, np.broadcast_to(pt[0], pt.shape))

    @pytest.mark.parametrize("seed", range(6))
    def test_one_lag_reference_agrees(self, seed):
        rng = np.random.default_rng(seed)
        case = generate_rationalisable(GeneratorConfig(K=6, J=3, J2=1, T=6, seed=seed))
        panels = [case.panel, case.panel.with_prices(case.panel.P * rng.uniform(0.8, 1.2, case.panel.P.shape))]
        for pan in panels:
            for beta in (0.95, 0.98, 1.0):
                fast = feasible_at_beta(pan, case.technology, beta) is not None
                assert fast == one_lag_feasible(pan, case.technology, beta)

    def test_determinism(self, rational_case):
        a = run_test(rational_case.panel, rational_case.technology)
        b = run_test(rational_case.panel, rational_case.technology)
        assert a.admissible_betas == b.admissible_betas
        np.testing.assert_array_equal(a.certificate.V, b.certificate.V)


class TestCertificate:
    def test_terminal_zero_and_roundtrip(self, rational_case):
        out = run_test(rational_case.panel, rational_case.technology)
        cert = out.certificate
        assert cert.beta == out.admissible_betas[0]
        assert not cert.terminal_pi_lag.any()
        back = Certificate.from_dict(cert.to_dict())
        np.testing.assert_array_equal(back.pi_tilde, cert.pi_tilde)

    def test_envelope_utility(self, rational_case):
        cert = feasible_at_beta(rational_case.panel, rational_case.technology, 0.98)
        u = reconstruct_utility(cert)
        for s, z in enumerate(cert.z_tilde):
            assert u(z) == pytest.approx(cert.V[s], abs=1e-6 * max(1.0, abs(cert.V[s])))
        rng = np.random.default_rng(0)
        Z = cert.z_tilde
        for _ in range(50):
            a, b = Z[rng.integers(len(Z))] + rng.normal(size=Z.shape[1]), Z[rng.integers(len(Z))]
            assert u(0.5 * a + 0.5 * b) >= 0.5 * u(a) + 0.5 * u(b) - 1e-9
            t = int(rng.integers(len(Z)))
            z = Z[t] + rng.normal(size=Z.shape[1])
            assert u(z) <= u(Z[t]) + cert.pi_tilde[t] @ (z - Z[t]) + 1e-6


class TestCycles:
    def test_scalar_negative_cycle(self):
        assert not check_cycles_bruteforce([1.0, 2.0], [0.0, 1.0])

    def test_scalar_positive_cycle(self):
        assert check_cycles_bruteforce([2.0, 1.0], [0.0, 1.0])

    def test_single_observation(self):
        assert check_cycles_bruteforce([np.ones(2)], [np.zeros(2)])

    @given(st.integers(0, 10**6), st.integers(2, 5), st.integers(1, 3))
    def test_lp_matches_enumeration(self, seed, n, d):
        rng = np.random.default_rng(seed)
        P = rng.normal(size=(n, d))
        Z = rng.normal(size=(n, d))
        if rng.random() < 0.5:  # gradients of a concave quadratic: always monotone
            M = rng.normal(size=(d, d))
            P = 1.0 - Z @ (M @ M.T)
        assert afriat_feasible(P, Z) == check_cycles_bruteforce(P, Z)


class TestCCEI:
    def test_pass_gives_one(self, rational_case):
        out = run_test(rational_case.panel, rational_case.technology)
        assert out.passed and out.ccei == 1.0

    def test_behavioural_violation_below_one(self):
        case = generate_behavioural_violation(GeneratorConfig(K=6, J=3, J2=1, T=5, seed=0))
        out = run_test(case.panel, case.technology)
        assert out.structural.nc_all_pass and not out.passed
        assert 0.0 <= out.ccei < 1.0

    @pytest.mark.parametrize("seed", range(4))
    def test_methods_agree(self, seed):
        case = generate_behavioural_violation(GeneratorConfig(K=6, J=3, J2=1, T=5, seed=seed))
        a = ccei(case.panel, case.technology, method="lp")
        b = ccei(case.panel, case.technology, method="bisect")
        assert abs(a - b) <= 1e-4

    def test_not_applicable_on_structural_failure(self):
        case = generate_structural_violation(GeneratorConfig(K=7, J=3, J2=1, T=6, seed=9))
        assert ccei(case.panel, case.technology) is None

    def test_slack_lp_monotone_in_efficiency(self):
        case = generate_behavioural_violation(GeneratorConfig(K=6, J=3, J2=1, T=5, seed=1))
        lp = HouseholdLP(case.panel, case.technology)
        e = ccei(case.panel, case.technology, grid=(0.97,))
        assert lp.feasible(0.97, max(0.0, e - 1e-3))
        assert not lp.feasible(0.97, min(1.0, e + 1e-3))


class TestOutcomeRecord:
    def test_json_roundtrip(self, rational_case):
        out = run_test(rational_case.panel, rational_case.technology, model_id="m")
        d = out.to_dict()
        assert d["pass"] is True and d["nc_all_pass"] is True and d["mean_distance"] == 0.0
        back = TestOutcome.from_dict(d)
        assert back.admissible_betas == out.admissible_betas
        assert back.structural == out.structural

    def test_pass_iff_admissible(self):
        for seed in range(5):
            case = generate_behavioural_violation(GeneratorConfig(K=6, J=3, J2=1, T=5, seed=seed))
            out = run_test(case.panel, case.technology)
            assert out.passed == bool(out.admissible_betas)


class TestLags:
    @pytest.mark.parametrize("seed", range(5))
    def test_two_lag_forward_panel_passes(self, seed):
        case = generate_rationalisable(GeneratorConfig(K=6, J=3, J2=1, L=2, T=7, seed=seed))
        assert feasible_at_beta(case.panel, case.technology, 0.98) is not None
        assert case.technology.lags == 2

    def test_missing_price_free_for_inactive_goods(self, tiny_panel):
        # unit prices on inactive goods play no role in the default regime
        tech = Technology(np.array([[1.0, 1.0]]), goods=("a", "b"))
        X = tiny_panel.X
        P1 = np.where(X > 0, tiny_panel.P, np.nan)
        a = HouseholdPanel.from_arrays("a", X, P1, ("a", "b"))
        b = HouseholdPanel.from_arrays("b", X, np.where(X > 0, tiny_panel.P, 99.0), ("a", "b"))
        assert (feasible_at_beta(a, tech, 1.0, MISSING) is None) == (feasible_at_beta(b, tech, 1.0, MISSING) is None)
