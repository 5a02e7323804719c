"""Phase space, target distributions and exact canonical sampling.

All model methods accept batched positions: the last axis is the coordinate
axis of length ``dim`` and any leading axes are treated as independent
points.  Potentials drop additive constants.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive, check_positive_int, check_vector
from .exceptions import ContractViolationError, DomainError, UnsupportedOperationError


@dataclass(frozen=True)
class PhaseState:
    """A point ``(q, p)`` in phase space."""

    position: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.position, dtype=float)
        p = np.asarray(self.momentum, dtype=float)
        if q.ndim != 1 or q.shape != p.shape or q.size == 0:
            raise ContractViolationError(
                f"position and momentum must be 1-D of equal length >= 1, "
                f"got {q.shape} and {p.shape}"
            )
        object.__setattr__(self, "position", q)
        object.__setattr__(self, "momentum", p)

    @property
    def dim(self):
        return self.position.shape[0]

    def flip(self):
        """Momentum reversal ``(q, p) -> (q, -p)``."""
        return PhaseState(self.position, -self.momentum)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.momentum)))


class TargetModel:
    """A target density ``exp(-V(q))`` given by its potential energy.

    Parameters
    ----------
    dim : int
        Number of position coordinates.
    potential, gradient : callable
        ``V(q)`` and ``grad V(q)``; both must accept batched ``q``.
    hessian_vector_product : callable, optional
        ``(q, w) -> Hess V(q) @ w``.  When omitted, central differences of
        the gradient are used.
    exact_position_sampler : callable, optional
        ``(rng, size) -> array of shape size + (dim,)`` drawing exact
        samples of the target.
    """

    name = "custom"

    def __init__(self, dim, potential=None, gradient=None,
                 hessian_vector_product=None, exact_position_sampler=None):
        self.dim = check_positive_int(dim, "dim")
        self._potential = potential
        self._gradient = gradient
        self._hvp = hessian_vector_product
        self._sampler = exact_position_sampler

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"

    def potential(self, q):
        return self._potential(q)

    def gradient(self, q):
        return self._gradient(q)

    def potential_and_gradient(self, q):
        return self.potential(q), self.gradient(q)

    @property
    def has_analytic_hvp(self):
        return self._hvp is not None

    def hessian_vector_product(self, q, w):
        if self._hvp is not None:
            return self._hvp(q, w)
        return finite_difference_hvp(self, q, w)

    @property
    def has_exact_sampler(self):
        return self._sampler is not None

    def sample_position(self, rng, size=None):
        if self._sampler is None:
            raise UnsupportedOperationError(f"{self!r} has no exact position sampler")
        return self._sampler(rng, size)


def finite_difference_hvp(model, q, w):
    """Central difference of the gradient along ``w``.

    Step ``h = 1e-4 * (1 + max|q|)`` per point.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    h = 1e-4 * (1.0 + np.max(np.abs(q), axis=-1, keepdims=True))
    return (model.gradient(q + h * w) - model.gradient(q - h * w)) / (2.0 * h)


class GaussianModel(TargetModel):
    """Product of independent zero-mean Gaussians with per-coordinate scales."""

    name = "gaussian"

    def __init__(self, scales):
        scales = check_vector(scales, name="scales")
        if np.any(scales <= 0):
            raise DomainError("Gaussian scales must be positive")
        super().__init__(scales.shape[0])
        self.scales = scales
        self._precision = 1.0 / scales**2

    def __repr__(self):
        if np.all(self.scales == 1.0):
            return f"standard_gaussian({self.dim})"
        return f"scaled_gaussian(dim={self.dim})"

    def potential(self, q):
        return 0.5 * np.sum(q * q * self._precision, axis=-1)

    def gradient(self, q):
        return q * self._precision

    def potential_and_gradient(self, q):
        g = q * self._precision
        return 0.5 * np.sum(q * g, axis=-1), g

    @property
    def has_analytic_hvp(self):
        return True

    def hessian_vector_product(self, q, w):
        return np.broadcast_to(w * self._precision, np.broadcast_shapes(np.shape(q), np.shape(w))).copy()

    @property
    def has_exact_sampler(self):
        return True

    def sample_position(self, rng, size=None):
        shape = (() if size is None else tuple(np.atleast_1d(size))) + (self.dim,)
        return rng.standard_normal(shape) * self.scales


class FunnelModel(TargetModel):
    """Neal's funnel: ``v ~ N(0, s^2)``, ``x_i | v ~ N(0, exp(v))``.

    Coordinate 0 is the log-variance ``v``; coordinates ``1..n_latent`` are
    the ``x_i``.  ``V = v^2/(2 s^2) + sum x_i^2 exp(-v)/2 + n v/2``.
    """

    name = "funnel"

    def __init__(self, n_latent=50, scale=3.0):
        self.n_latent = check_positive_int(n_latent, "n_latent")
        self.scale = check_positive(scale, "scale")
        super().__init__(self.n_latent + 1)

    def __repr__(self):
        return f"funnel({self.n_latent}, {self.scale})"

    def potential(self, q):
        v = q[..., 0]
        x = q[..., 1:]
        return (0.5 * v * v / self.scale**2
                + 0.5 * np.sum(x * x, axis=-1) * np.exp(-v)
                + 0.5 * self.n_latent * v)

    def potential_and_gradient(self, q):
        v = q[..., 0]
        x = q[..., 1:]
        with np.errstate(over="ignore", invalid="ignore"):
            inv_var = np.exp(-v)
            half_sq = 0.5 * (x * x).sum(-1) * inv_var
            pot = 0.5 * v * v / self.scale**2 + half_sq + 0.5 * self.n_latent * v
            grad = np.empty(q.shape)
            grad[..., 0] = v / self.scale**2 - half_sq + 0.5 * self.n_latent
            grad[..., 1:] = x * inv_var[..., None] if q.ndim > 1 else x * inv_var
        return pot, grad

    def gradient(self, q):
        return self.potential_and_gradient(q)[1]

    @property
    def has_analytic_hvp(self):
        return True

    def hessian_vector_product(self, q, w):
        q = np.asarray(q, dtype=float)
        w = np.asarray(w, dtype=float)
        v = q[..., 0]
        x = q[..., 1:]
        wv = w[..., 0]
        wx = w[..., 1:]
        inv_var = np.exp(-v)
        out = np.empty(np.broadcast_shapes(q.shape, w.shape))
        out[..., 0] = ((1.0 / self.scale**2 + 0.5 * np.sum(x * x, axis=-1) * inv_var) * wv
                       - inv_var * np.sum(x * wx, axis=-1))
        out[..., 1:] = inv_var[..., None] * (wx - x * wv[..., None])
        return out

    @property
    def has_exact_sampler(self):
        return True

    def sample_position(self, rng, size=None):
        lead = () if size is None else tuple(np.atleast_1d(size))
        v = self.scale * rng.standard_normal(lead)
        x = np.exp(0.5 * v)[..., None] * rng.standard_normal(lead + (self.n_latent,))
        return np.concatenate([v[..., None], x], axis=-1)


def standard_gaussian(d):
    return GaussianModel(np.ones(check_positive_int(d, "d")))


def scaled_gaussian(scales):
    return GaussianModel(scales)


def funnel(n_latent=50, scale=3.0):
    return FunnelModel(n_latent, scale)


MODEL_CATALOG = {
    "standard_gaussian": standard_gaussian,
    "scaled_gaussian": scaled_gaussian,
    "funnel": funnel,
}


def potential_energy(model, q):
    q = check_vector(q, model.dim, name="q")
    return float(model.potential(q))


def kinetic_energy(p):
    """Euclidean kinetic energy with unit metric, ``|p|^2 / 2``."""
    p = check_vector(p, name="p")
    return 0.5 * float(np.dot(p, p))


def hamiltonian(model, z):
    if z.dim != model.dim:
        raise ContractViolationError(f"state has dim {z.dim}, model has dim {model.dim}")
    return kinetic_energy(z.momentum) + potential_energy(model, z.position)


def sample_momentum(rng, d, size=None):
    """Standard normal momenta (unit metric)."""
    d = check_positive_int(d, "d")
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (d,)
    return rng.standard_normal(shape)


def exact_canonical_sample(model, rng):
    """An exact draw from ``exp(-H)``: exact position, fresh momentum."""
    if not model.has_exact_sampler:
        raise UnsupportedOperationError(f"{model!r} has no exact position sampler")
    q = model.sample_position(rng)
    p = sample_momentum(rng, model.dim)
    return PhaseState(q, p)
