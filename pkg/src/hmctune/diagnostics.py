"""Divergence detection, split R-hat, and R-hat against exact draws."""

from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_positive, check_positive_int
from .exceptions import ContractViolationError, DegenerateVarianceError
from .integrator import DEFAULT_DIVERGENCE_THRESHOLD


@dataclass(frozen=True)
class DivergencePolicy:
    energy_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD
    treat_nonfinite_as_divergent: bool = True

    def __post_init__(self):
        check_positive(self.energy_threshold, "energy_threshold")
        if not self.treat_nonfinite_as_divergent:
            raise ContractViolationError("non-finite states are always divergent")


@dataclass(frozen=True)
class RhatResult:
    rhat: float
    n_chains_used: int
    n_draws_per_half: int
    n_exact_chains: int = 0


def detect_divergence(traj, policy=DivergencePolicy()):
    """True iff the energy grew past the threshold or anything went non-finite."""
    errors = np.asarray(traj.energy_errors, dtype=float)
    if errors.size == 0:
        raise ContractViolationError("trajectory has no energy errors recorded")
    if not np.all(np.isfinite(errors)):
        return True
    if not all(s.is_finite() for s in traj.states):
        return True
    return bool(errors.max() > policy.energy_threshold)


def _as_chains(chains):
    chains = [np.asarray(c, dtype=float).ravel() for c in chains]
    if len(chains) < 2:
        raise ContractViolationError(f"need at least 2 chains, got {len(chains)}")
    n = min(c.size for c in chains)
    if n < 4:
        raise ContractViolationError(f"chains need at least 4 draws, shortest has {n}")
    return np.stack([c[:n] for c in chains])


def _split_rhat(mat, n_exact):
    half = mat.shape[1] // 2
    halves = np.concatenate([mat[:, :half], mat[:, mat.shape[1] - half:]])
    n = half
    w = halves.var(axis=1, ddof=1).mean()
    if not w > 0.0:
        raise DegenerateVarianceError("every half-chain has zero variance")
    b = n * halves.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return RhatResult(float(np.sqrt(var_plus / w)), halves.shape[0], n, n_exact)


def split_rhat(chains):
    """Classical split potential scale reduction factor.

    Chains are truncated to the shortest length, then each is cut in half.
    """
    return _split_rhat(_as_chains(chains), 0)


def rhat_with_exact(mcmc_chains, exact_draws, n_exact_chains=1):
    """Split R-hat with ``n_exact_chains`` pseudo-chains of exact draws appended.

    Each pseudo-chain has the common MCMC chain length, so ``exact_draws``
    must hold at least ``n_exact_chains`` times that many values.
    """
    n_exact_chains = check_positive_int(n_exact_chains, "n_exact_chains")
    mcmc = [np.asarray(c, dtype=float).ravel() for c in mcmc_chains]
    if not mcmc:
        raise ContractViolationError("need at least one MCMC chain")
    n = min(c.size for c in mcmc)
    exact = np.asarray(exact_draws, dtype=float).ravel()
    if exact.size < n * n_exact_chains:
        raise ContractViolationError(
            f"need {n * n_exact_chains} exact draws for {n_exact_chains} pseudo-chains "
            f"of length {n}, got {exact.size}")
    pseudo = [exact[i * n:(i + 1) * n] for i in range(n_exact_chains)]
    return _split_rhat(_as_chains(mcmc + pseudo), n_exact_chains)


@dataclass
class ScanRow:
    target: float
    achieved_accept: float
    step_size: float
    n_divergent: int
    rhat_v: float


SCAN_COLUMNS = ("target", "achieved_accept", "step_size", "n_divergent", "rhat_v")


def divergence_scan(model, targets, base_config, n_chains=4, parallelism=1, coordinate=0,
                    exact_seed=None, n_exact_chains=1):
    """Adapt to each target, run chains, and tabulate divergences and R-hat_v.

    ``base_config`` is a :class:`~hmctune.sampler.ChainConfig`.  Chain ``c``
    uses seed ``base_config.seed + c`` at every target, so all rows share
    starting points and random streams and differ only through the target.
    The scanned scalar is ``coordinate`` (the funnel log-scale ``v`` by
    default).  Divergences are counted over post-warmup transitions.
    """
    from .sampler import run_chains

    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 1 or targets.size == 0:
        raise ContractViolationError("targets must be a non-empty 1-D sequence")
    if np.any((targets <= 0) | (targets >= 1)):
        raise ContractViolationError("targets must lie in (0, 1)")
    if np.any(np.diff(targets) <= 0):
        raise ContractViolationError("targets must be sorted ascending")
    if base_config.n_samples < 4:
        raise ContractViolationError("chains need at least 4 post-warmup draws")
    n_chains = check_positive_int(n_chains, "n_chains")
    # a separate stream, so exact draws never coincide with a chain's start
    rng = np.random.default_rng([base_config.seed, 1] if exact_seed is None else exact_seed)
    exact = model.sample_position(rng, base_config.n_samples * n_exact_chains)[:, coordinate]
    rows = []
    for target in targets:
        configs = [replace(base_config, adapt=True, target_accept=float(target),
                           seed=base_config.seed + c) for c in range(n_chains)]
        outs = run_chains(model, configs, parallelism)
        rh = rhat_with_exact([o.draws[:, coordinate] for o in outs], exact, n_exact_chains)
        rows.append(ScanRow(
            float(target),
            float(np.mean([o.acceptance_rate for o in outs])),
            float(np.mean([o.adapted_step_size for o in outs])),
            int(sum(o.n_divergent for o in outs)),
            rh.rhat,
        ))
    return rows
