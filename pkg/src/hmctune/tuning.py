"""Acceptance curve, cost bounds, optimal targets and step-size adaptation.

The bound functions come in an alpha-free "shape" form, which is all the
optimum depends on; pass ``alpha`` to get values on the scale of an actual
problem.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from ._validation import check_open_unit, check_order, check_positive
from .exceptions import ContractViolationError, DomainError, ExhaustionError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BOUND_BRACKET = (0.01, 0.99)


@dataclass(frozen=True)
class AcceptanceModel:
    """Mean acceptance ``a(eps) = 2 Phi(-sqrt(alpha/2) eps^k)``."""

    alpha: float
    k: int = 2

    def __post_init__(self):
        check_positive(self.alpha, "alpha")
        check_order(self.k)


@dataclass(frozen=True)
class CostBounds:
    acceptance: float
    lower: float
    upper: float


def acceptance_curve(m, eps):
    eps = check_positive(eps, "eps", allow_zero=True)
    return float(2.0 * ndtr(-math.sqrt(m.alpha / 2.0) * eps**m.k))


def epsilon_for_acceptance(m, a):
    """Step size giving mean acceptance ``a``, the inverse of the curve."""
    a = check_open_unit(a, "a")
    return float((math.sqrt(2.0 / m.alpha) * ndtri(1.0 - a / 2.0)) ** (1.0 / m.k))


def expected_inverse_acceptance(m, eps):
    """Gaussian-approximation value of ``E[1 / a(q, p)]``.

    ``Phi(-x) + Phi(3x) exp(4 x^2)`` with ``x = sqrt(alpha/2) eps^k``;
    saturates to ``inf`` instead of overflowing.
    """
    eps = check_positive(eps, "eps", allow_zero=True)
    x = math.sqrt(m.alpha / 2.0) * eps**m.k
    log_tail = float(log_ndtr(3.0 * x)) + 4.0 * x * x
    if log_tail > 709.0:
        return math.inf
    return float(ndtr(-x)) + math.exp(log_tail)


def inverse_acceptance_lower(a):
    """Jensen lower bound on ``E_q[1 / E_p[a]]`` in terms of mean acceptance."""
    return 1.0 / np.asarray(a, dtype=float)


def inverse_acceptance_upper(a):
    """Gaussian approximation of ``E[1/a]``, an upper bound on ``E_q[1 / E_p[a]]``.

    ``a/2 + Phi(-3 u) exp(4 u^2)`` with ``u = Phi^-1(a/2)``, evaluated in log
    space for small ``a``.
    """
    a = np.asarray(a, dtype=float)
    u = ndtri(a / 2.0)
    with np.errstate(over="ignore"):
        return a / 2.0 + np.exp(log_ndtr(-3.0 * u) + 4.0 * u * u)


def _check_bound_args(a, k):
    check_order(k)
    arr = np.asarray(a, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("acceptance probability must lie in (0, 1)")
    return arr


def _eps_shape(a, k, alpha):
    eps = ndtri(1.0 - a / 2.0) ** (1.0 / k)
    if alpha is not None:
        eps = eps * (2.0 / check_positive(alpha, "alpha")) ** (0.5 / k)
    return eps


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def cost_lower(a, k, alpha=None):
    """Lower cost bound ``1 / (eps(a) a)``; alpha-free unless ``alpha`` is given."""
    arr = _check_bound_args(a, k)
    return _scalar_or_array(inverse_acceptance_lower(arr) / _eps_shape(arr, k, alpha), a)


def cost_upper(a, k, alpha=None):
    """Upper cost bound, the approximate ``E[1/a]`` divided by ``eps(a)``."""
    arr = _check_bound_args(a, k)
    return _scalar_or_array(inverse_acceptance_upper(arr) / _eps_shape(arr, k, alpha), a)


def cost_bounds(a, k, alpha=None):
    return CostBounds(float(a), cost_lower(a, k, alpha), cost_upper(a, k, alpha))


def golden_section_minimize(f, lo, hi, tol=1e-6):
    """Minimize a unimodal function on ``[lo, hi]`` to bracket width ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_acceptance(k, bound="lower", alpha=None, tol=1e-6):
    """Mean acceptance minimizing the chosen cost bound."""
    check_order(k)
    funcs = {"lower": cost_lower, "upper": cost_upper}
    if bound not in funcs:
        raise DomainError(f"bound must be 'lower' or 'upper', got {bound!r}")
    f = funcs[bound]
    return golden_section_minimize(lambda a: f(a, k, alpha), *BOUND_BRACKET, tol=tol)


@dataclass(frozen=True)
class DualAveragingState:
    """Nesterov dual averaging on ``log eps`` (defaults follow Stan)."""

    log_eps: float
    log_eps_avg: float
    h_avg: float
    iteration: int
    target: float
    mu: float
    gamma: float = 0.05
    t0: float = 10.0
    kappa_da: float = 0.75

    def __post_init__(self):
        check_open_unit(self.target, "target")
        if self.iteration < 0:
            raise ContractViolationError("iteration must be >= 0")

    @classmethod
    def initial(cls, step_size, target, gamma=0.05, t0=10.0, kappa_da=0.75):
        log_eps = math.log(check_positive(step_size, "step_size"))
        return cls(log_eps, log_eps, 0.0, 0, target, math.log(10.0 * step_size),
                   gamma, t0, kappa_da)

    @property
    def step_size(self):
        """Working step size during warmup."""
        return math.exp(self.log_eps)

    @property
    def final_step_size(self):
        """Averaged step size, frozen after warmup."""
        return math.exp(self.log_eps_avg)


def adapt_step(state, observed_accept_prob):
    """One dual-averaging update toward ``state.target``."""
    t = state.iteration + 1
    eta = 1.0 / (t + state.t0)
    h_avg = (1.0 - eta) * state.h_avg + eta * (state.target - observed_accept_prob)
    log_eps = state.mu - math.sqrt(t) / state.gamma * h_avg
    w = t ** (-state.kappa_da)
    log_eps_avg = w * log_eps + (1.0 - w) * state.log_eps_avg
    return replace(state, log_eps=log_eps, log_eps_avg=log_eps_avg, h_avg=h_avg, iteration=t)


@dataclass
class TuningReport:
    target_acceptance: float
    achieved_acceptance: float
    final_step_size: float
    n_divergent: int
    relaxation_trace: list = field(default_factory=list)
    fitted_alpha: float = None


def robust_target_search(model, config, initial_target=0.65, step=0.05, max_target=0.99,
                         n_warmup=500, n_probe=500, n_chains=1, parallelism=1):
    """Raise the acceptance target until a probe run has no divergences.

    For each target the step size is adapted over ``n_warmup`` transitions,
    then ``n_probe`` transitions are run at the frozen step size and their
    divergences counted (summed over ``n_chains`` independent probe chains).
    ``config`` is a :class:`~hmctune.sampler.ChainConfig` template; probe
    chain ``c`` at relaxation step ``i`` uses seed ``config.seed + 1000 i + c``.
    """
    from .sampler import run_chains

    check_open_unit(initial_target, "initial_target")
    check_open_unit(max_target, "max_target")
    if not initial_target < max_target:
        raise DomainError("initial_target must be below max_target")
    check_positive(step, "step")
    trace = []
    i = 0
    while True:
        target = round(initial_target + i * step, 10)
        if target > max_target + 1e-12:
            break
        configs = [replace(config, n_warmup=n_warmup, n_samples=n_probe, adapt=True,
                           target_accept=target, seed=config.seed + 1000 * i + c)
                   for c in range(n_chains)]
        outs = run_chains(model, configs, parallelism)
        n_div = sum(o.n_divergent for o in outs)
        trace.append((target, n_div))
        if n_div == 0:
            achieved = float(np.mean([o.acceptance_rate for o in outs]))
            eps = float(np.mean([o.adapted_step_size for o in outs]))
            return TuningReport(target, achieved, eps, 0, trace)
        i += 1
    raise ExhaustionError(
        f"divergences persisted up to target {max_target}: {trace}", trace)
