import numpy as np
import pytest
from scipy import stats

from hmctune import (
    ContractViolationError,
    ErrorSampleSet,
    InsufficientSignalError,
    IntegrationTime,
    IntegratorConfig,
    UnstableRegimeError,
    UnsupportedOperationError,
    check_global_constraint,
    cumulants,
    fit_alpha,
    funnel,
    inverse_acceptance_estimates,
    moment,
    sample_errors,
    scaling_exponent,
    standard_gaussian,
)
from hmctune.error_stats import (
    acceptance_probabilities,
    fit_alpha_from_kappa2,
    kstatistics,
    mean_acceptance,
    power_law_fit,
)
from hmctune.model import TargetModel


def test_kstatistics_match_scipy(rng):
    x = rng.gamma(2.0, size=5000)
    ours = kstatistics(x)
    for n in range(1, 5):
        assert ours[n - 1] == pytest.approx(stats.kstat(x, n), rel=1e-9)


def test_cumulants_of_known_distribution(rng):
    # Exponential(1): kappa_n = (n - 1)!
    x = rng.exponential(size=400_000)
    cs = cumulants(ErrorSampleSet.from_samples(x), n_boot=50)
    for n, expected in enumerate([1, 1, 2, 6]):
        assert abs(cs.kappa[n] - expected) < 5 * cs.standard_errors[n]


def test_cumulant_combination_se(rng):
    cs = cumulants(ErrorSampleSet.from_samples(rng.normal(size=10_000)), n_boot=100)
    value, se = cs.combination([1.0, 0.5, 0.0, 0.0])
    assert value == pytest.approx(cs.kappa[0] + 0.5 * cs.kappa[1])
    assert se > 0


def test_moment_se_is_standard_error(rng):
    x = rng.normal(size=1000)
    m, se = moment(ErrorSampleSet.from_samples(x), 1)
    assert m == pytest.approx(x.mean())
    assert se == pytest.approx(x.std(ddof=1) / np.sqrt(1000))


def test_moment_order_checked():
    with pytest.raises(ContractViolationError):
        moment(ErrorSampleSet.from_samples([0.0, 1.0]), 5)


def test_divergent_draws_excluded_from_moments():
    s = ErrorSampleSet.from_samples([1.0, 3.0, -np.inf])
    assert s.n_divergent == 1
    assert moment(s, 1)[0] == 2.0


def test_global_constraint_uses_all_draws():
    s = ErrorSampleSet.from_samples([0.0, 0.0, -np.inf, np.log(2.0)])
    value, _ = check_global_constraint(s)
    assert value == pytest.approx((1 + 1 + 0 + 2) / 4)


def test_global_constraint_gaussian():
    errs = sample_errors(standard_gaussian(2), 3, IntegratorConfig(0.3), IntegrationTime(1.0),
                         200_000)
    value, se = check_global_constraint(errs)
    assert abs(value - 1.0) < 4 * se


def test_sample_errors_shape_and_determinism():
    args = (standard_gaussian(2), 5, IntegratorConfig(0.2), IntegrationTime(1.0), 250_000)
    a = sample_errors(*args)
    b = sample_errors(*args, n_jobs=3)
    assert a.n == 250_000
    np.testing.assert_array_equal(a.samples, b.samples)


def test_sample_errors_needs_sampler():
    m = TargetModel(1, lambda q: 0.5 * (q * q).sum(-1), lambda q: q)
    with pytest.raises(UnsupportedOperationError):
        sample_errors(m, 0, IntegratorConfig(0.1), IntegrationTime(1.0), 10)


def test_power_law_fit_exact():
    eps = np.array([0.1, 0.2, 0.4])
    slope, _, intercept, rms = power_law_fit(eps, 3.0 * eps**4)
    assert slope == pytest.approx(4.0)
    assert np.exp(intercept) == pytest.approx(3.0)
    assert rms < 1e-12


def test_fit_alpha_synthetic():
    eps = np.array([0.1, 0.2, 0.3])
    fit = fit_alpha_from_kappa2(eps, 2.5 * eps**4, 2)
    assert fit.alpha == pytest.approx(2.5)
    assert fit.fit_residual < 1e-12
    assert fit.acceptance_model().alpha == pytest.approx(1.25)


def test_fit_alpha_needs_three_points():
    with pytest.raises(ContractViolationError):
        fit_alpha_from_kappa2([0.1, 0.2], [1.0, 2.0], 2)


def test_fit_alpha_gaussian_slope():
    fit = fit_alpha(standard_gaussian(1), 2, 2, [0.2, 0.3, 0.4], IntegrationTime(2.4), 200_000,
                    n_boot=50)
    assert abs(fit.slope - 4.0) < 0.3


def test_fit_alpha_unstable_regime():
    with pytest.raises(UnstableRegimeError) as info:
        fit_alpha(funnel(50), 0, 2, [0.3, 0.4, 0.5], IntegrationTime(1.0), 2000, n_boot=10)
    assert info.value.divergent_fraction > 1e-3


def test_scaling_exponent_insufficient_signal():
    with pytest.raises(InsufficientSignalError):
        scaling_exponent(standard_gaussian(1), 0, 1, IntegratorConfig(0.1, "yoshida4"),
                         [0.01, 0.02, 0.03], IntegrationTime(1.0), 1000)


def test_acceptance_probabilities():
    s = ErrorSampleSet(0.1, 1.0, 2, np.array([0.5, -1.0, -np.inf]))
    np.testing.assert_allclose(acceptance_probabilities(s), [1.0, np.exp(-1.0), 0.0])
    a, se = mean_acceptance(s)
    assert a == pytest.approx((1 + np.exp(-1.0)) / 3)


def test_inverse_acceptance_ordering():
    est = inverse_acceptance_estimates(standard_gaussian(1), 4, IntegratorConfig(1.0),
                                       IntegrationTime(1.0), 400, 200)
    assert est.lower <= est.nested + 3 * est.nested_se
    assert est.nested <= est.upper + 3 * est.upper_se
    assert 0 < est.mean_accept < 1


@pytest.mark.xfail(strict=True, reason="one-dimensional errors are far from Gaussian at large "
                                      "step sizes, so the closed-form curve misses by > 0.03")
def test_one_dimensional_curve_agreement_below_1_8():
    from hmctune import acceptance_curve

    m = standard_gaussian(1)
    time = IntegrationTime(np.pi / 2)
    curve = fit_alpha(m, 21, 2, [0.1, 0.15, 0.2], time, 200_000, n_boot=20).acceptance_model()
    worst = 0.0
    for i, eps in enumerate(np.arange(0.25, 1.8, 0.25)):
        errs = sample_errors(m, 100 + i, IntegratorConfig(eps), time, 200_000)
        worst = max(worst, abs(mean_acceptance(errs)[0] - acceptance_curve(curve, eps)))
    assert worst < 0.03
