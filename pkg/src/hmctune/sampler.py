"""The HMC transition and seeded single- and multi-chain runners."""

import math
import pickle
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_open_unit, check_positive_int, check_vector
from .exceptions import ChainError, ContractViolationError, DomainError
from .integrator import (
    DEFAULT_DIVERGENCE_THRESHOLD,
    IntegrationTime,
    IntegratorConfig,
    is_divergent,
    simulate,
)
from .model import GaussianModel
from .tuning import DualAveragingState, adapt_step


@dataclass(frozen=True)
class TransitionRecord:
    accepted: bool
    delta: float
    accept_prob: float
    divergent: bool
    n_steps: int
    step_size_used: float


@dataclass(frozen=True)
class ChainConfig:
    """Everything one chain needs; the chain is a pure function of this.

    ``initial_position`` is a vector, ``"zeros"``, ``"exact"`` (one draw from
    the model's exact sampler) or ``None`` for the model default: zeros for
    Gaussians, an exact draw otherwise when available.
    """

    n_samples: int
    seed: int = 0
    n_warmup: int = 0
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(0.1))
    time: IntegrationTime = field(default_factory=lambda: IntegrationTime(1.0))
    adapt: bool = True
    target_accept: float = 0.8
    initial_position: object = None
    da_gamma: float = 0.05
    da_t0: float = 10.0
    da_kappa: float = 0.75
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD

    def __post_init__(self):
        check_positive_int(self.n_samples, "n_samples")
        check_positive_int(self.n_warmup, "n_warmup", minimum=0)
        if self.adapt:
            check_open_unit(self.target_accept, "target_accept")


@dataclass
class ChainOutput:
    draws: np.ndarray
    records: list
    adapted_step_size: float

    @property
    def warmup_records(self):
        return self.records[: len(self.records) - self.draws.shape[0]]

    @property
    def sampling_records(self):
        return self.records[len(self.records) - self.draws.shape[0]:]

    @property
    def acceptance_rate(self):
        """Mean accept probability over post-warmup transitions."""
        return float(np.mean([r.accept_prob for r in self.sampling_records]))

    @property
    def n_divergent(self):
        return sum(r.divergent for r in self.sampling_records)


def hmc_transition(model, rng, q, cfg, time, threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """One HMC transition from position ``q``.

    Draws are taken from ``rng`` in a fixed order: momentum, then the jittered
    step count (only if jitter is on), then the Metropolis uniform.
    """
    p = rng.standard_normal(model.dim)
    n = time.n_steps(cfg.step_size, rng)
    res = simulate(model, q, p, cfg.step_size, n, cfg.scheme)
    u = rng.random()
    divergent = bool(is_divergent(res["max_energy_error"], res["q"], res["p"], threshold))
    with np.errstate(invalid="ignore"):
        delta = float(res["h0"] - res["h1"])
    if not math.isfinite(delta):
        delta = -math.inf
    if divergent:
        accept_prob = 0.0
    else:
        accept_prob = 1.0 if delta >= 0.0 else math.exp(delta)
    accepted = u < accept_prob
    q_new = res["q"] if accepted else q
    return q_new, TransitionRecord(accepted, delta, accept_prob, divergent, int(n), cfg.step_size)


def _initial_position(model, spec, rng):
    if spec is None:
        if isinstance(model, GaussianModel) or not model.has_exact_sampler:
            spec = "zeros"
        else:
            spec = "exact"
    if isinstance(spec, str):
        if spec == "zeros":
            return np.zeros(model.dim)
        if spec == "exact":
            return np.asarray(model.sample_position(rng), dtype=float)
        raise DomainError(f"unknown initializer {spec!r}; use 'zeros' or 'exact'")
    return check_vector(spec, model.dim, name="initial_position")


def warmup(model, config, rng, q):
    """Run ``config.n_warmup`` transitions from ``q``, adapting if enabled.

    Returns ``(q, step_size, records)`` with the frozen step size to use
    afterwards.
    """
    eps0 = config.integrator.step_size
    scheme = config.integrator.scheme
    state = None
    if config.adapt and config.n_warmup > 0:
        state = DualAveragingState.initial(eps0, config.target_accept, config.da_gamma,
                                           config.da_t0, config.da_kappa)
    records = []
    cfg = config.integrator
    for _ in range(config.n_warmup):
        if state is not None:
            cfg = IntegratorConfig(state.step_size, scheme)
        q, rec = hmc_transition(model, rng, q, cfg, config.time, config.divergence_threshold)
        records.append(rec)
        if state is not None:
            state = adapt_step(state, rec.accept_prob)
    return q, (state.final_step_size if state is not None else eps0), records


def sample(model, rng, q, cfg, time, n, threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """``n`` transitions at a fixed step size; returns ``(draws, records)``."""
    draws = np.empty((n, model.dim))
    records = []
    for i in range(n):
        q, rec = hmc_transition(model, rng, q, cfg, time, threshold)
        records.append(rec)
        draws[i] = q
    return draws, records


def run_chain(model, config):
    """Warmup (with dual averaging if ``config.adapt``) then frozen-eps sampling."""
    rng = np.random.default_rng(config.seed)
    q = _initial_position(model, config.initial_position, rng)
    if not np.all(np.isfinite(q)):
        raise DomainError("initial position must be finite")
    q, eps, warm = warmup(model, config, rng, q)
    cfg = IntegratorConfig(eps, config.integrator.scheme)
    draws, records = sample(model, rng, q, cfg, config.time, config.n_samples,
                            config.divergence_threshold)
    return ChainOutput(draws, warm + records, eps)


def _run_indexed(args):
    model, config = args
    return run_chain(model, config)


def _picklable(obj):
    try:
        pickle.dumps(obj)
    except Exception:
        return False
    return True


def run_chains(model, configs, parallelism=1):
    """Run independent chains; outputs follow config order.

    With ``parallelism > 1`` chains run in worker processes (threads if the
    model cannot be pickled).  Each chain depends only on its own config, so
    results are identical for any ``parallelism``.
    """
    configs = list(configs)
    if not configs:
        raise ContractViolationError("run_chains needs at least one config")
    parallelism = check_positive_int(parallelism, "parallelism")
    workers = min(parallelism, len(configs))
    if workers == 1:
        outputs = []
        for i, c in enumerate(configs):
            try:
                outputs.append(run_chain(model, c))
            except Exception as exc:
                raise ChainError(i, exc) from exc
        return outputs
    pool_cls = ProcessPoolExecutor if _picklable(model) else ThreadPoolExecutor
    with pool_cls(max_workers=workers) as pool:
        futures = [pool.submit(_run_indexed, (model, c)) for c in configs]
        outputs = []
        for i, fut in enumerate(futures):
            try:
                outputs.append(fut.result())
            except Exception as exc:
                raise ChainError(i, exc) from exc
    return outputs
