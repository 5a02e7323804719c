"""Monte Carlo statistics of the Hamiltonian error over exact canonical draws.

Draws ``z ~ exp(-H)`` are generated exactly (not by MCMC), pushed through
the proposal map, and the resulting errors ``Delta = H(z) - H(z')`` are
summarized by moments, k-statistics and the exponential constraint
``E[exp(Delta)] = 1``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_random_state, seed_sequence_from
from .exceptions import (
    ContractViolationError,
    InsufficientSignalError,
    UnstableRegimeError,
    UnsupportedOperationError,
)
from .integrator import (
    DEFAULT_DIVERGENCE_THRESHOLD,
    IntegratorConfig,
    is_divergent,
    simulate,
)

SHARD_SIZE = 100_000
MAX_DIVERGENT_FRACTION = 1e-3


@dataclass
class ErrorSampleSet:
    """Hamiltonian errors at fixed ``(eps, tau, order)``.

    ``samples`` holds every endpoint error, with ``-inf`` for non-finite
    proposals.  ``divergent`` flags draws excluded from moment arithmetic.
    """

    eps: float
    tau: float
    order: int
    samples: np.ndarray
    divergent: np.ndarray = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ContractViolationError("an error sample set needs at least 2 draws")
        if self.divergent is None:
            self.divergent = ~np.isfinite(self.samples)
        else:
            self.divergent = np.asarray(self.divergent, dtype=bool) | ~np.isfinite(self.samples)

    @property
    def n(self):
        return self.samples.size

    @property
    def n_divergent(self):
        return int(self.divergent.sum())

    @property
    def clean(self):
        """Errors of the non-divergent draws."""
        if not self.divergent.any():
            return self.samples
        return self.samples[~self.divergent]

    @classmethod
    def from_samples(cls, samples, eps=1.0, tau=1.0, order=2):
        return cls(eps, tau, order, samples)


@dataclass
class CumulantSet:
    kappa: np.ndarray
    standard_errors: np.ndarray
    replicates: np.ndarray = field(default=None, repr=False)

    def combination(self, weights):
        """Value and bootstrap SE of ``sum_i w_i kappa_i``."""
        w = np.asarray(weights, dtype=float)
        value = float(w @ self.kappa)
        se = float(np.std(self.replicates @ w, ddof=1)) if self.replicates is not None else np.nan
        return value, se


@dataclass
class AlphaFit:
    alpha: float
    k: int
    eps_grid: np.ndarray
    kappa2_values: np.ndarray
    fit_residual: float
    slope: float = np.nan
    slope_se: float = np.nan
    kappa2_se: np.ndarray = None

    def acceptance_model(self):
        """Acceptance model whose curve matches the fitted variance.

        Under a Gaussian error with variance ``kappa2 = alpha eps^(2k)`` the
        mean acceptance is ``2 Phi(-sqrt(alpha) eps^k / 2)``, i.e. the closed
        form ``2 Phi(-sqrt(alpha'/2) eps^k)`` with ``alpha' = alpha / 2``.
        """
        from .tuning import AcceptanceModel

        return AcceptanceModel(self.alpha / 2.0, self.k)


def _shard_errors(model, seed, cfg, time, n, threshold):
    rng = np.random.default_rng(seed)
    q = model.sample_position(rng, n)
    p = rng.standard_normal((n, model.dim))
    steps = time.n_steps(cfg.step_size, rng if time.jitter else None, size=n)
    res = simulate(model, q, p, cfg.step_size, steps if time.jitter else int(steps[0]), cfg.scheme)
    div = is_divergent(res["max_energy_error"], res["q"], res["p"], threshold)
    with np.errstate(invalid="ignore"):
        delta = res["h0"] - res["h1"]
    delta = np.where(np.isfinite(delta), delta, -np.inf)
    return delta, div


def sample_errors(model, rng, cfg, time, n, n_jobs=1, threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """Draw ``n`` Hamiltonian errors from exact canonical samples.

    Draws are split into fixed-size shards with seeds spawned from ``rng``,
    so results do not depend on ``n_jobs``.
    """
    if not model.has_exact_sampler:
        raise UnsupportedOperationError(f"{model!r} has no exact position sampler")
    n = check_positive_int(n, "n", minimum=2)
    sizes = [SHARD_SIZE] * (n // SHARD_SIZE)
    if n % SHARD_SIZE:
        sizes.append(n % SHARD_SIZE)
    seeds = seed_sequence_from(rng).spawn(len(sizes))

    def work(i):
        return _shard_errors(model, seeds[i], cfg, time, sizes[i], threshold)

    if n_jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    samples = np.concatenate([d for d, _ in parts])
    divergent = np.concatenate([v for _, v in parts])
    return ErrorSampleSet(cfg.step_size, time.tau, cfg.order, samples, divergent)


def moment(sample_set, order_n):
    """Plug-in estimate of ``E[Delta^n]`` over non-divergent draws.

    The SE is the jackknife SE of a sample mean, which equals ``s / sqrt(N)``.
    """
    if order_n not in (1, 2, 3, 4):
        raise ContractViolationError(f"moment order must be 1..4, got {order_n}")
    x = sample_set.clean ** order_n
    if x.size < 2:
        raise InsufficientSignalError("fewer than two non-divergent draws")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def _kstats_from_sums(n, s1, s2, s3, s4):
    """Unbiased k-statistics k1..k4 from power sums (vectorized over sums)."""
    k1 = s1 / n
    k2 = (n * s2 - s1**2) / (n * (n - 1))
    k3 = (2 * s1**3 - 3 * n * s1 * s2 + n**2 * s3) / (n * (n - 1) * (n - 2))
    k4 = (-6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2
          - 4 * n * (n + 1) * s1 * s3 + n**2 * (n + 1) * s4) / (n * (n - 1) * (n - 2) * (n - 3))
    return np.stack([k1, k2, k3, k4], axis=-1)


def kstatistics(x):
    """k-statistics ``k1..k4`` of a 1-D sample (needs at least 4 points)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ContractViolationError("k-statistics up to order 4 need at least 4 points")
    shift = x.mean()
    c = x - shift
    sums = [c.sum(), (c**2).sum(), (c**3).sum(), (c**4).sum()]
    k = _kstats_from_sums(float(n), *sums)
    k[0] += shift
    return k


def cumulants(sample_set, n_boot=200, random_state=0):
    """k-statistics for ``kappa_1..kappa_4`` with bootstrap standard errors.

    Bootstrap replicates are kept on the result so that SEs of linear
    combinations (e.g. ``kappa1 + kappa2 / 2``) can be formed.
    """
    x = sample_set.clean
    n = x.size
    kappa = kstatistics(x)
    rng = check_random_state(random_state)
    shift = x.mean()
    c = x - shift
    powers = np.stack([c, c * c, c**3, c**4], axis=1)
    reps = np.empty((n_boot, 4))
    for b in range(n_boot):
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        reps[b] = _kstats_from_sums(float(n), *(counts @ powers))
    reps[:, 0] += shift
    return CumulantSet(kappa, reps.std(axis=0, ddof=1), reps)


def check_global_constraint(sample_set):
    """Estimate ``E[exp(Delta)]`` and its SE; the exact value is 1.

    Uses every draw: a non-finite proposal contributes ``exp(-inf) = 0``.
    """
    w = np.exp(np.minimum(sample_set.samples, 700.0))
    return float(w.mean()), float(w.std(ddof=1) / np.sqrt(w.size))


def power_law_fit(eps, values, ses=None, fixed_slope=None):
    """Least-squares fit of ``log values = c + slope * log eps``.

    With ``ses`` the fit is weighted by the log-scale errors ``se / value``.
    Returns ``(slope, slope_se, intercept, rms_residual)``; ``slope_se`` is
    NaN without ``ses`` and fewer than three points.
    """
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if fixed_slope is not None:
        intercept = float(np.mean(y - fixed_slope * x))
        resid = y - intercept - fixed_slope * x
        return float(fixed_slope), 0.0, intercept, float(np.sqrt(np.mean(resid**2)))
    if ses is None:
        w = np.ones_like(x)
    else:
        w = 1.0 / (np.asarray(ses, dtype=float) / np.asarray(values, dtype=float)) ** 2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - intercept - slope * x
    if ses is not None:
        slope_se = float(np.sqrt(1.0 / sxx))
    elif x.size > 2:
        slope_se = float(np.sqrt(np.sum(resid**2) / (x.size - 2) / sxx))
    else:
        slope_se = np.nan
    return slope, slope_se, intercept, float(np.sqrt(np.mean(resid**2)))


def fit_alpha_from_kappa2(eps_grid, kappa2, k, kappa2_se=None):
    """Fit ``kappa2 = alpha * eps^(2k)`` with the exponent held at ``2k``."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    kappa2 = np.asarray(kappa2, dtype=float)
    if eps_grid.size < 3:
        raise ContractViolationError("fit_alpha needs at least 3 step sizes")
    if np.any(kappa2 <= 0):
        raise InsufficientSignalError("non-positive kappa2 estimate; cannot take logs")
    _, _, intercept, resid = power_law_fit(eps_grid, kappa2, fixed_slope=2 * k)
    slope, slope_se, _, _ = power_law_fit(eps_grid, kappa2, kappa2_se)
    return AlphaFit(float(np.exp(intercept)), k, eps_grid, kappa2, resid, slope, slope_se,
                    None if kappa2_se is None else np.asarray(kappa2_se, dtype=float))


def _checked_errors(model, rng, cfg, time, n):
    errs = sample_errors(model, rng, cfg, time, n)
    frac = errs.n_divergent / errs.n
    if frac > MAX_DIVERGENT_FRACTION:
        raise UnstableRegimeError(
            f"{frac:.2%} of draws diverged at eps={cfg.step_size}; "
            "the scaling fit needs a stable step size",
            step_size=cfg.step_size, divergent_fraction=frac)
    return errs


def fit_alpha(model, rng, k, eps_grid, time, n_per_eps, n_boot=200):
    """Estimate ``kappa2`` on a grid of step sizes and fit its scale ``alpha``."""
    seeds = seed_sequence_from(rng).spawn(len(eps_grid))
    k2, k2_se = [], []
    for eps, seed in zip(eps_grid, seeds):
        errs = _checked_errors(model, seed, IntegratorConfig.from_order(eps, k), time, n_per_eps)
        cs = cumulants(errs, n_boot=n_boot, random_state=np.random.default_rng(seed.spawn(1)[0]))
        k2.append(cs.kappa[1])
        k2_se.append(cs.standard_errors[1])
    return fit_alpha_from_kappa2(eps_grid, k2, k, k2_se)


def scaling_exponent(model, rng, moment_n, cfg, eps_grid, time, n_per_eps):
    """Log-log slope of ``|E[Delta^n]|`` against the step size.

    ``cfg`` is a template: its scheme is used, its step size replaced by each
    grid value.  Returns ``(slope, se)`` from a fit weighted by the moment SEs.
    """
    if moment_n not in (1, 2):
        raise ContractViolationError(f"moment_n must be 1 or 2, got {moment_n}")
    seeds = seed_sequence_from(rng).spawn(len(eps_grid))
    values, ses = [], []
    for eps, seed in zip(eps_grid, seeds):
        errs = _checked_errors(model, seed, IntegratorConfig(eps, cfg.scheme), time, n_per_eps)
        m, se = moment(errs, moment_n)
        if abs(m) < 2 * se:
            raise InsufficientSignalError(
                f"moment {moment_n} at eps={eps} is within 2 SE of zero ({m:.3g} +- {se:.3g})")
        values.append(abs(m))
        ses.append(se)
    slope, slope_se, _, _ = power_law_fit(eps_grid, values, ses)
    return slope, slope_se


def acceptance_probabilities(sample_set):
    """Metropolis acceptance ``min(1, exp(Delta))``; 0 for divergent draws."""
    a = np.exp(np.minimum(sample_set.samples, 0.0))
    return np.where(sample_set.divergent, 0.0, a)


def mean_acceptance(sample_set):
    """Mean acceptance probability and its SE."""
    a = acceptance_probabilities(sample_set)
    return float(a.mean()), float(a.std(ddof=1) / np.sqrt(a.size))


@dataclass
class InverseAcceptance:
    """Monte Carlo estimates of the three inverse-acceptance quantities.

    ``lower = 1 / E[a]``, ``nested = E_q[1 / E_p[a]]`` and ``upper = E[1/a]``,
    each with an SE.  They satisfy ``lower <= nested <= upper``.
    """

    eps: float
    mean_accept: float
    mean_accept_se: float
    lower: float
    lower_se: float
    nested: float
    nested_se: float
    upper: float
    upper_se: float
    n_divergent: int


def inverse_acceptance_estimates(model, rng, cfg, time, n_outer, n_inner,
                                 threshold=DEFAULT_DIVERGENCE_THRESHOLD, chunk=None):
    """Nested estimate of ``E_q[1 / E_p[a]]`` with its two Jensen bounds.

    ``n_outer`` exact positions each get ``n_inner`` fresh momenta.  The
    inner average ``m_q`` enters as ``1/m_q - s_q^2 / (n_inner m_q^3)``,
    removing the leading finite-inner-sample bias.  SEs treat positions as
    the independent units.
    """
    if not model.has_exact_sampler:
        raise UnsupportedOperationError(f"{model!r} has no exact position sampler")
    n_outer = check_positive_int(n_outer, "n_outer", minimum=2)
    n_inner = check_positive_int(n_inner, "n_inner", minimum=2)
    rng = check_random_state(rng)
    chunk = chunk or max(1, 2_000_000 // (n_inner * model.dim))
    m = np.empty(n_outer)
    v = np.empty(n_outer)
    u = np.empty(n_outer)
    n_div = 0
    for start in range(0, n_outer, chunk):
        size = min(chunk, n_outer - start)
        q = np.repeat(model.sample_position(rng, size)[:, None, :], n_inner, axis=1)
        p = rng.standard_normal((size, n_inner, model.dim))
        steps = time.n_steps(cfg.step_size, rng if time.jitter else None, size=(size, n_inner))
        res = simulate(model, q, p, cfg.step_size, steps if time.jitter else int(steps.flat[0]),
                       cfg.scheme)
        div = is_divergent(res["max_energy_error"], res["q"], res["p"], threshold)
        with np.errstate(invalid="ignore", over="ignore"):
            delta = res["h0"] - res["h1"]
            a = np.where(div | ~np.isfinite(delta), 0.0, np.exp(np.minimum(delta, 0.0)))
            inv = np.where(a > 0, 1.0 / a, np.inf)
        n_div += int(div.sum())
        sl = slice(start, start + size)
        m[sl] = a.mean(axis=1)
        v[sl] = a.var(axis=1, ddof=1)
        u[sl] = inv.mean(axis=1)
    root = np.sqrt(n_outer)
    ea, ea_se = float(m.mean()), float(m.std(ddof=1) / root)
    with np.errstate(divide="ignore", invalid="ignore"):
        nested_terms = 1.0 / m - v / (n_inner * m**3)
    return InverseAcceptance(
        eps=cfg.step_size,
        mean_accept=ea,
        mean_accept_se=ea_se,
        lower=1.0 / ea,
        lower_se=ea_se / ea**2,
        nested=float(nested_terms.mean()),
        nested_se=float(nested_terms.std(ddof=1) / root),
        upper=float(u.mean()),
        upper_se=float(u.std(ddof=1) / root),
        n_divergent=n_div,
    )
