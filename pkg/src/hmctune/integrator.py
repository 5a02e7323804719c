"""Symmetric symplectic integrators and the Metropolis proposal map.

Two schemes are provided: kick-drift-kick leapfrog (order 2) and the
triple-jump composition of leapfrog (order 4).  The batched kernel
:func:`simulate` drives both the single-trajectory API and the vectorized
error statistics.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .exceptions import ContractViolationError, DomainError, UnsupportedOperationError
from .model import PhaseState, hamiltonian

_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA_OUTER = 1.0 / (2.0 - _CBRT2)
YOSHIDA_INNER = -_CBRT2 / (2.0 - _CBRT2)

SCHEME_ORDERS = {"leapfrog": 2, "yoshida4": 4}

DEFAULT_DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class IntegratorConfig:
    step_size: float
    scheme: str = "leapfrog"

    def __post_init__(self):
        check_positive(self.step_size, "step_size")
        if self.scheme not in SCHEME_ORDERS:
            raise DomainError(f"unknown integrator {self.scheme!r}; "
                              f"choose from {sorted(SCHEME_ORDERS)}")

    @property
    def order(self):
        return SCHEME_ORDERS[self.scheme]

    @classmethod
    def from_order(cls, step_size, order):
        schemes = {k: s for s, k in SCHEME_ORDERS.items()}
        if order not in schemes:
            raise DomainError(f"integrator order must be 2 or 4, got {order!r}")
        return cls(step_size, schemes[order])


@dataclass(frozen=True)
class IntegrationTime:
    """Integration time ``tau`` with optional uniform relative jitter."""

    tau: float
    jitter: float = 0.0

    def __post_init__(self):
        check_positive(self.tau, "tau")
        if not (0.0 <= self.jitter < 1.0):
            raise DomainError(f"jitter must lie in [0, 1), got {self.jitter}")

    def n_steps(self, step_size, rng=None, size=None):
        """Number of integrator steps, ``round(tau_eff / eps)`` with minimum 1.

        Rounding is half away from zero.  ``tau_eff`` is jittered only when
        ``jitter > 0``, which then requires ``rng``.
        """
        if self.jitter == 0.0:
            n = max(1, math.floor(self.tau / step_size + 0.5))
            return n if size is None else np.full(size, n, dtype=np.int64)
        if rng is None:
            raise ContractViolationError("a random source is required when jitter > 0")
        u = rng.random(size)
        tau_eff = self.tau * (1.0 + self.jitter * (2.0 * u - 1.0))
        n = np.maximum(1, np.floor(tau_eff / step_size + 0.5)).astype(np.int64)
        return int(n) if size is None else n


@dataclass
class Trajectory:
    states: list
    energy_errors: np.ndarray
    n_steps: int
    divergent: bool

    @property
    def final(self):
        return self.states[-1]


def _leapfrog(model, q, p, grad, eps):
    """One kick-drift-kick step.  Returns ``(q, p, V(q), grad V(q))`` at the end."""
    p = p - 0.5 * eps * grad
    q = q + eps * p
    pot, grad = model.potential_and_gradient(q)
    p = p - 0.5 * eps * grad
    return q, p, pot, grad


def _yoshida4(model, q, p, grad, eps):
    q, p, _, grad = _leapfrog(model, q, p, grad, YOSHIDA_OUTER * eps)
    q, p, _, grad = _leapfrog(model, q, p, grad, YOSHIDA_INNER * eps)
    return _leapfrog(model, q, p, grad, YOSHIDA_OUTER * eps)


_KERNELS = {"leapfrog": _leapfrog, "yoshida4": _yoshida4}


def simulate(model, q, p, step_size, n_steps, scheme="leapfrog", record=False):
    """Integrate a batch of states for ``n_steps`` steps.

    ``q`` and ``p`` have shape ``(..., dim)``; ``n_steps`` is an int or an
    integer array over the leading axes (entries that have finished are
    frozen).  Non-finite values propagate and never raise.

    Returns a dict with ``q``, ``p`` (final state), ``h0``, ``h1`` (initial and
    final Hamiltonian), ``max_energy_error`` (max over the trajectory of
    ``H(z_t) - H(z_0)``, NaN-aware: any NaN makes it NaN) and, if ``record``,
    lists ``qs``, ``ps``, ``energy_errors`` including the start.
    """
    kernel = _KERNELS[scheme]
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    with np.errstate(all="ignore"):
        if q.ndim == 1 and not record:
            return _simulate_single(model, kernel, q, p, step_size, int(n_steps))
        pot, grad = model.potential_and_gradient(q)
        h0 = pot + 0.5 * (p * p).sum(-1)
        max_err = np.zeros(np.shape(h0))
        steps = np.asarray(n_steps)
        ragged = steps.ndim > 0
        total = int(steps.max()) if ragged else int(steps)
        out = {"qs": [q], "ps": [p], "energy_errors": [np.zeros(np.shape(h0))]} if record else None
        h = h0
        for i in range(total):
            qn, pn, potn, gradn = kernel(model, q, p, grad, step_size)
            hn = potn + 0.5 * (pn * pn).sum(-1)
            if ragged:
                active = i < steps
                a = active[..., None]
                q = np.where(a, qn, q)
                p = np.where(a, pn, p)
                grad = np.where(a, gradn, grad)
                h = np.where(active, hn, h)
            else:
                q, p, grad, h = qn, pn, gradn, hn
            err = h - h0
            # fmax ignores NaN, so NaN is tracked explicitly
            max_err = np.where(np.isnan(err) | np.isnan(max_err), np.nan, np.fmax(max_err, err))
            if record:
                out["qs"].append(q)
                out["ps"].append(p)
                out["energy_errors"].append(err)
    result = {"q": q, "p": p, "h0": h0, "h1": h, "max_energy_error": max_err}
    if record:
        result.update(out)
    return result


def _simulate_single(model, kernel, q, p, step_size, n_steps):
    """Scalar fast path of :func:`simulate` for one unrecorded trajectory."""
    pot, grad = model.potential_and_gradient(q)
    h0 = float(pot) + 0.5 * float(p @ p)
    h = h0
    max_err = 0.0
    for _ in range(n_steps):
        q, p, pot, grad = kernel(model, q, p, grad, step_size)
        h = float(pot) + 0.5 * float(p @ p)
        err = h - h0
        if not math.isfinite(err):
            # already divergent; later steps cannot change the verdict
            max_err = math.nan
            break
        if err > max_err:
            max_err = err
    return {"q": q, "p": p, "h0": np.float64(h0), "h1": np.float64(h),
            "max_energy_error": np.float64(max_err)}


def is_divergent(max_energy_error, final_q, final_p, threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """Vectorized divergence rule: energy growth above threshold or non-finite."""
    finite = (np.all(np.isfinite(final_q), axis=-1) & np.all(np.isfinite(final_p), axis=-1)
              & np.isfinite(max_energy_error))
    with np.errstate(invalid="ignore"):
        return ~finite | (max_energy_error > threshold)


def _check_state(model, z):
    if z.dim != model.dim:
        raise ContractViolationError(f"state has dim {z.dim}, model has dim {model.dim}")


def leapfrog_step(model, z, eps):
    """One second-order kick-drift-kick step from ``z``."""
    _check_state(model, z)
    eps = check_positive(eps, "eps")
    with np.errstate(all="ignore"):
        grad = model.gradient(z.position)
        q, p, _, _ = _leapfrog(model, z.position, z.momentum, grad, eps)
    return PhaseState(q, p)


def yoshida4_step(model, z, eps):
    """One fourth-order triple-jump step (three leapfrog sub-steps)."""
    _check_state(model, z)
    eps = check_positive(eps, "eps")
    with np.errstate(all="ignore"):
        grad = model.gradient(z.position)
        q, p, _, _ = _yoshida4(model, z.position, z.momentum, grad, eps)
    return PhaseState(q, p)


def integrate(model, z0, cfg, time, rng=None, threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """Simulate a trajectory of ``round(tau/eps)`` steps, storing every state."""
    _check_state(model, z0)
    n = time.n_steps(cfg.step_size, rng)
    res = simulate(model, z0.position, z0.momentum, cfg.step_size, n, cfg.scheme, record=True)
    states = [PhaseState(qi, pi) for qi, pi in zip(res["qs"], res["ps"])]
    errors = np.array([float(e) for e in res["energy_errors"]])
    divergent = bool(is_divergent(res["max_energy_error"], res["q"], res["p"], threshold))
    return Trajectory(states, errors, n, divergent)


def propose(model, z, cfg, time, rng=None, threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """Metropolis proposal: simulate, then reverse the momentum."""
    traj = integrate(model, z, cfg, time, rng, threshold)
    return traj.final.flip(), traj


def hamiltonian_error(model, z, z_prop):
    """``H(z) - H(z_prop)``; ``-inf`` when the proposal is non-finite."""
    _check_state(model, z_prop)
    if not z_prop.is_finite():
        return -math.inf
    with np.errstate(all="ignore"):
        h_prop = float(model.potential(z_prop.position)) + 0.5 * float(
            np.dot(z_prop.momentum, z_prop.momentum))
    if not math.isfinite(h_prop):
        return -math.inf
    return hamiltonian(model, z) - h_prop


def correction_G(model, z, scheme="leapfrog"):
    """Leading modified-Hamiltonian term of leapfrog with unit metric.

    ``G = (2 |grad V|^2 - p^T Hess V p) / 24``.
    """
    if scheme != "leapfrog":
        raise UnsupportedOperationError(
            "the modified-Hamiltonian correction is implemented for leapfrog only")
    _check_state(model, z)
    g = model.gradient(z.position)
    hp = model.hessian_vector_product(z.position, z.momentum)
    return (2.0 * float(np.dot(g, g)) - float(np.dot(z.momentum, hp))) / 24.0


def analytic_mean_error_gaussian(eps, tau):
    """Leading-order mean energy increase for leapfrog on the 1-D unit Gaussian.

    Returns ``eps**4 (1 - cos 2 tau) / 64``.  This is the magnitude of the mean
    Hamiltonian error: ``E[H(z') - H(z)] = -E[Delta] >= 0``.
    """
    eps = check_positive(eps, "eps", allow_zero=True)
    tau = check_positive(tau, "tau", allow_zero=True)
    return eps**4 * (1.0 - math.cos(2.0 * tau)) / 64.0
