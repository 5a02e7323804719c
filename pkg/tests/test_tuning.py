import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from hmctune import (
    AcceptanceModel,
    ChainConfig,
    DomainError,
    DualAveragingState,
    ExhaustionError,
    IntegrationTime,
    IntegratorConfig,
    acceptance_curve,
    adapt_step,
    cost_bounds,
    cost_lower,
    cost_upper,
    epsilon_for_acceptance,
    expected_inverse_acceptance,
    funnel,
    optimal_acceptance,
    robust_target_search,
    run_chain,
    standard_gaussian,
)
from hmctune.model import TargetModel
from hmctune.tuning import golden_section_minimize


def grid_argmin(f, lo=0.01, hi=0.99, step=1e-4):
    a = np.arange(lo, hi + step / 2, step)
    return a[np.argmin(f(a))]


class TestAcceptanceCurve:
    def test_zero_step(self):
        assert acceptance_curve(AcceptanceModel(1.0), 0.0) == 1.0

    def test_reference_value(self):
        assert acceptance_curve(AcceptanceModel(2.0, 2), 1.0) == pytest.approx(0.3173105, abs=1e-7)
        assert acceptance_curve(AcceptanceModel(2.0, 2), 1.0) == pytest.approx(2 * norm.cdf(-1),
                                                                               abs=1e-12)

    def test_monotone(self):
        m = AcceptanceModel(0.7, 4)
        vals = [acceptance_curve(m, e) for e in np.linspace(0, 3, 200)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("a", [0.3, 0.651, 0.9])
    @pytest.mark.parametrize("k", [2, 4])
    def test_round_trip(self, a, k):
        m = AcceptanceModel(1.7, k)
        assert acceptance_curve(m, epsilon_for_acceptance(m, a)) == pytest.approx(a, abs=1e-10)

    def test_inverse_reference(self):
        assert epsilon_for_acceptance(AcceptanceModel(2.0, 2), 0.3173105) == pytest.approx(1.0,
                                                                                          abs=1e-6)

    def test_inverse_limit(self):
        m = AcceptanceModel(1.0)
        assert epsilon_for_acceptance(m, 1 - 1e-12) < 1e-2

    @pytest.mark.parametrize("a", [0.0, 1.0, -0.1, 1.5])
    def test_inverse_domain(self, a):
        with pytest.raises(DomainError):
            epsilon_for_acceptance(AcceptanceModel(1.0), a)

    def test_model_invariants(self):
        with pytest.raises(DomainError):
            AcceptanceModel(0.0)
        with pytest.raises(DomainError):
            AcceptanceModel(1.0, 3)


class TestExpectedInverseAcceptance:
    def test_zero_step(self):
        assert expected_inverse_acceptance(AcceptanceModel(1.0), 0.0) == pytest.approx(1.0)

    def test_reference_value(self):
        expected = norm.cdf(-1) + norm.cdf(3) * math.exp(4)
        assert expected_inverse_acceptance(AcceptanceModel(2.0), 1.0) == pytest.approx(expected)

    def test_jensen_ordering(self):
        m = AcceptanceModel(1.3)
        for e in np.linspace(0.01, 2.0, 50):
            assert expected_inverse_acceptance(m, e) >= 1 / acceptance_curve(m, e) - 1e-12

    def test_saturates(self):
        assert expected_inverse_acceptance(AcceptanceModel(2.0), 100.0) == math.inf


class TestBounds:
    def test_lower_optimum(self):
        assert optimal_acceptance(2, "lower") == pytest.approx(0.651, abs=1e-3)

    def test_upper_optimum(self):
        assert optimal_acceptance(2, "upper") == pytest.approx(0.801, abs=5e-3)

    @pytest.mark.parametrize("k", [2, 4])
    @pytest.mark.parametrize("bound, f", [("lower", cost_lower), ("upper", cost_upper)])
    def test_golden_section_matches_grid(self, k, bound, f):
        a_gs = optimal_acceptance(k, bound)
        a_grid = grid_argmin(lambda a: f(a, k))
        assert abs(a_gs - a_grid) < 2e-4

    def test_k4_values_recorded(self):
        # grid-scan oracle values at resolution 1e-4
        assert optimal_acceptance(4, "lower") == pytest.approx(0.7964, abs=2e-4)
        assert optimal_acceptance(4, "upper") == pytest.approx(0.8680, abs=2e-4)

    @pytest.mark.parametrize("k", [2, 4])
    def test_squeeze(self, k):
        a = np.linspace(0.001, 0.999, 2001)
        assert np.all(cost_lower(a, k) <= cost_upper(a, k))

    @pytest.mark.parametrize("k", [2, 4])
    @pytest.mark.parametrize("bound", ["lower", "upper"])
    @pytest.mark.parametrize("alpha", [0.01, 1.0, 37.0])
    def test_optimum_independent_of_alpha(self, k, bound, alpha):
        assert optimal_acceptance(k, bound, alpha=alpha) == pytest.approx(
            optimal_acceptance(k, bound), abs=1e-6)

    def test_alpha_scaled_bound_is_cost_per_step(self):
        m = AcceptanceModel(0.8, 2)
        a = 0.7
        eps = epsilon_for_acceptance(m, a)
        assert cost_lower(a, 2, alpha=0.8) == pytest.approx(1 / (eps * a))

    def test_lower_diverges_near_one(self):
        assert cost_lower(1 - 1e-9, 2) > 100 * cost_lower(0.65, 2)

    def test_unimodal_on_bracket(self):
        for k in (2, 4):
            for f in (cost_lower, cost_upper):
                v = f(np.linspace(0.01, 0.99, 9801), k)
                turns = np.sum(np.diff(np.sign(np.diff(v))) != 0)
                assert turns == 1

    def test_flatness_of_upper_bound(self):
        # The upper bound is within 28% of its minimum at 0.651 and within 16% at 0.9.
        ref = cost_upper(optimal_acceptance(2, "upper"), 2)
        assert cost_upper(0.651, 2) / ref == pytest.approx(1.2768, abs=1e-3)
        assert cost_upper(0.9, 2) / ref == pytest.approx(1.1523, abs=1e-3)

    def test_domain(self):
        with pytest.raises(DomainError):
            cost_lower(1.0, 2)
        with pytest.raises(DomainError):
            cost_upper(np.array([0.5, 0.0]), 2)
        with pytest.raises(DomainError):
            optimal_acceptance(2, "middle")

    def test_cost_bounds_record(self):
        cb = cost_bounds(0.7, 2)
        assert cb.lower <= cb.upper

    def test_upper_finite_for_small_a(self):
        assert np.isfinite(cost_upper(0.05, 2))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.001, 0.999), st.sampled_from([2, 4]))
    def test_squeeze_property(self, a, k):
        assert cost_lower(a, k) <= cost_upper(a, k)


def test_golden_section_quadratic():
    assert golden_section_minimize(lambda x: (x - 0.3) ** 2, 0, 1, 1e-8) == pytest.approx(0.3,
                                                                                        abs=1e-7)


class TestDualAveraging:
    def test_initial_state(self):
        s = DualAveragingState.initial(0.5, 0.8)
        assert s.mu == pytest.approx(math.log(5.0))
        assert s.iteration == 0 and s.h_avg == 0.0

    def test_invariants(self):
        with pytest.raises(DomainError):
            DualAveragingState.initial(0.5, 1.2)

    def test_on_target_fixed_point(self):
        s = DualAveragingState.initial(0.5, 0.8)
        for _ in range(100):
            s = adapt_step(s, 0.8)
        assert s.h_avg == 0.0
        assert s.log_eps == pytest.approx(s.mu)

    def test_zero_acceptance_shrinks_step(self):
        s = DualAveragingState.initial(0.5, 0.8)
        steps = []
        for _ in range(50):
            s = adapt_step(s, 0.0)
            steps.append(s.step_size)
        assert all(b < a for a, b in zip(steps, steps[1:]))

    def test_deterministic(self):
        a = adapt_step(DualAveragingState.initial(0.3, 0.7), 0.4)
        b = adapt_step(DualAveragingState.initial(0.3, 0.7), 0.4)
        assert a == b

    def test_hand_computed_update(self):
        s = adapt_step(DualAveragingState.initial(1.0, 0.8), 0.3)
        h = 0.5 / 11
        log_eps = math.log(10.0) - 1.0 / 0.05 * h
        assert s.h_avg == pytest.approx(h)
        assert s.log_eps == pytest.approx(log_eps)
        assert s.log_eps_avg == pytest.approx(log_eps)

    @pytest.mark.slow
    def test_reaches_target_on_gaussian(self):
        cfg = ChainConfig(2000, seed=0, n_warmup=1000, target_accept=0.8,
                          time=IntegrationTime(3.0, 0.5))
        out = run_chain(standard_gaussian(10), cfg)
        assert abs(out.acceptance_rate - 0.8) < 0.03


class TestRobustSearch:
    def test_gaussian_stays_at_initial(self):
        base = ChainConfig(500, seed=1, integrator=IntegratorConfig(0.3))
        rep = robust_target_search(standard_gaussian(10), base)
        assert rep.target_acceptance == 0.65
        assert rep.relaxation_trace == [(0.65, 0)]
        assert rep.final_step_size > 0

    def test_never_diverging_stub(self):
        m = TargetModel(1, lambda q: 0.0 * q.sum(-1), lambda q: 0.0 * q)
        rep = robust_target_search(m, ChainConfig(50, seed=0, initial_position="zeros"),
                                   n_warmup=20, n_probe=20)
        assert rep.target_acceptance == 0.65

    def test_funnel_relaxes(self):
        base = ChainConfig(500, seed=500, time=IntegrationTime(4.0, 0.5))
        rep = robust_target_search(funnel(50), base)
        assert rep.target_acceptance > 0.65
        assert rep.relaxation_trace[0][1] > 0

    def test_exhaustion_carries_trace(self):
        # a NaN gradient makes every trajectory diverge on its first step
        m = TargetModel(1, lambda q: 0.5 * (q * q).sum(-1), lambda q: np.full_like(q, np.nan))
        base = ChainConfig(50, seed=0, initial_position="zeros", time=IntegrationTime(4.0))
        with pytest.raises(ExhaustionError) as info:
            robust_target_search(m, base, initial_target=0.5, max_target=0.55,
                                 n_warmup=20, n_probe=20)
        assert [t for t, _ in info.value.trace] == [0.5, 0.55]

    def test_argument_checks(self):
        with pytest.raises(DomainError):
            robust_target_search(standard_gaussian(1), ChainConfig(10), initial_target=0.9,
                                 max_target=0.8)
