"""Input validation helpers used at public API boundaries.

Internal numerical kernels never call these; non-finite values are allowed
to propagate there because divergences are reported as data.
"""

import math
import numbers

import numpy as np

from .exceptions import ContractViolationError, DomainError


def check_vector(x, dim=None, name="x", allow_nonfinite=False):
    """Return ``x`` as a 1-D float array, checking length and finiteness."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ContractViolationError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ContractViolationError(f"{name} must be non-empty")
    if dim is not None and arr.shape[0] != dim:
        raise ContractViolationError(
            f"{name} has length {arr.shape[0]}, expected {dim}"
        )
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise DomainError(f"{name} must be {bound}, got {value}")
    return value


def check_open_unit(value, name):
    """Check ``0 < value < 1``."""
    value = float(value)
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_order(k):
    if k not in (2, 4):
        raise DomainError(f"integrator order must be 2 or 4, got {k!r}")
    return int(k)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ContractViolationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ContractViolationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_random_state(seed):
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ContractViolationError(f"cannot build a random generator from {seed!r}")


def seed_sequence_from(rng):
    """Derive a SeedSequence deterministically from a seed or generator.

    A generator is advanced by exactly one draw.
    """
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(int(rng.integers(0, 2**63 - 1)))
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.SeedSequence(rng)
    raise ContractViolationError(f"cannot derive a seed sequence from {rng!r}")
