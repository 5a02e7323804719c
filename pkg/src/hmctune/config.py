"""Flat ``key = value`` run configuration with typed keys.

Every key is declared in :data:`KEYS`.  A config file plus command-line
overrides is parsed into a :class:`RunConfig`; unknown keys and malformed
values raise :class:`~hmctune.exceptions.ConfigError`.
"""

import logging
import math
from dataclasses import dataclass

from .exceptions import ConfigError

log = logging.getLogger(__name__)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text):
    t = text.strip().lower()
    if t in ("pi", "π"):
        return math.pi
    if t.endswith("pi") or t.endswith("π"):
        head = t[:-2] if t.endswith("pi") else t[:-1]
        head = head.rstrip("*")
        if "/" in head or not head:
            raise ValueError(f"write multiples of pi as e.g. 0.5pi, got {text!r}")
        return float(head) * math.pi
    if t.startswith("pi/") or t.startswith("π/"):
        return math.pi / float(t.split("/", 1)[1])
    return float(t)


def _float_list(text):
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return [_float(s) for s in items]


def _int_list(text):
    return [int(s) for s in text.split(",") if s.strip()]


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    help: str
    choices: tuple = None


KEYS = {
    "seed": Key(int, None, "master random seed (required)"),
    # model
    "model": Key(str, "gaussian", "target model", ("gaussian", "funnel")),
    "dim": Key(int, 1, "Gaussian dimension"),
    "gauss_scale_min": Key(_float, 1.0, "smallest Gaussian scale (scales are linearly spaced)"),
    "gauss_scale_max": Key(_float, 1.0, "largest Gaussian scale"),
    "funnel_latent_dim": Key(int, 50, "number of funnel latent coordinates"),
    "funnel_scale": Key(_float, 3.0, "funnel log-scale standard deviation"),
    # integrator
    "step_size": Key(_float, 0.1, "integrator step size (initial value when adapting)"),
    "integrator": Key(str, "leapfrog", "integration scheme", ("leapfrog", "yoshida4")),
    "tau": Key(_float, 1.0, "integration time"),
    "tau_jitter": Key(_float, 0.0, "relative uniform jitter of the integration time"),
    "divergence_threshold": Key(_float, 1000.0, "energy growth that marks a divergence"),
    # error statistics
    "eps_grid": Key(_float_list, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "step-size grid"),
    "tau_grid": Key(_float_list, [0.5, 1.0, math.pi / 2, 3.0], "integration-time grid"),
    "n_draws": Key(int, 1_000_000, "exact draws per grid point"),
    "n_boot": Key(int, 200, "bootstrap resamples for cumulant SEs"),
    "n_jobs": Key(int, 1, "worker threads for error sampling"),
    # bounds
    "order": Key(int, 2, "integrator order k", (2, 4)),
    "accept_min": Key(_float, 0.05, "smallest acceptance on the bound grid"),
    "accept_max": Key(_float, 0.99, "largest acceptance on the bound grid"),
    "accept_step": Key(_float, 0.01, "bound grid spacing"),
    # gauss experiment
    "fit_eps_grid": Key(_float_list, [0.05, 0.075, 0.1], "step sizes for the alpha fit"),
    "fit_n_draws": Key(int, 1_000_000, "exact draws per alpha-fit step size"),
    "n_outer": Key(int, 2000, "positions for the nested inverse-acceptance estimate"),
    "n_inner": Key(int, 500, "momenta per position for the nested estimate"),
    # adaptation and relaxation
    "target_accept": Key(_float, 0.8, "dual-averaging target acceptance"),
    "adapt_warmup": Key(int, 1000, "warmup transitions"),
    "adapt": Key(_bool, True, "adapt the step size during warmup"),
    "da_gamma": Key(_float, 0.05, "dual-averaging gamma"),
    "da_t0": Key(_float, 10.0, "dual-averaging t0"),
    "da_kappa": Key(_float, 0.75, "dual-averaging kappa"),
    "relax_initial_target": Key(_float, 0.65, "first target tried by the relaxation search"),
    "relax_step": Key(_float, 0.05, "target increment of the relaxation search"),
    "relax_max_target": Key(_float, 0.99, "largest target tried"),
    "relax_warmup": Key(int, 500, "warmup transitions per relaxation probe"),
    "relax_probe": Key(int, 500, "probe transitions per relaxation step"),
    "relax_chains": Key(int, 1, "probe chains per relaxation step"),
    # chains and scans
    "n_samples": Key(int, 2000, "post-warmup draws per chain"),
    "n_chains": Key(int, 4, "number of chains"),
    "parallelism": Key(int, 1, "worker processes for chains"),
    "initial_position": Key(str, "default", "chain initializer", ("default", "zeros", "exact")),
    "targets": Key(_float_list, [0.6, 0.7, 0.8, 0.9, 0.95, 0.99], "scan targets"),
    "n_exact_chains": Key(int, 1, "exact pseudo-chains in R-hat_v"),
    "scan_coordinate": Key(int, 0, "coordinate tracked by R-hat_v"),
    # scaling
    "scaling_orders": Key(_int_list, [2, 4], "integrator orders to fit"),
    "eps_grid_k2": Key(_float_list, [0.2, 0.3, 0.4], "step sizes for order-2 slopes"),
    "eps_grid_k4": Key(_float_list, [0.2, 0.3, 0.4], "step sizes for order-4 slopes"),
    "moments_k2": Key(_int_list, [1, 2], "moments fitted for order 2"),
    "moments_k4": Key(_int_list, [2], "moments fitted for order 4"),
    "synthetic": Key(_bool, False, "fit noiseless synthetic power laws instead of draws"),
}

_MODEL_KEYS = ("model", "dim", "gauss_scale_min", "gauss_scale_max",
               "funnel_latent_dim", "funnel_scale")
_ADAPT_KEYS = ("adapt", "target_accept", "adapt_warmup", "da_gamma", "da_t0", "da_kappa",
               "step_size", "integrator", "tau", "tau_jitter", "divergence_threshold",
               "initial_position", "n_samples", "parallelism")

SUBCOMMANDS = {
    "delta-scan": {
        "keys": ("seed", "eps_grid", "tau_grid", "n_draws", "n_jobs", "divergence_threshold"),
        "defaults": {},
    },
    "constraint-check": {
        "keys": ("seed", *_MODEL_KEYS, "eps_grid", "tau", "tau_jitter", "integrator",
                 "n_draws", "n_boot", "n_jobs", "divergence_threshold"),
        "defaults": {"eps_grid": [0.1, 0.2, 0.3, 0.4, 0.5]},
    },
    "bounds": {
        "keys": ("seed", "order", "accept_min", "accept_max", "accept_step"),
        "defaults": {},
    },
    "gauss-experiment": {
        "keys": ("seed", "dim", "gauss_scale_min", "gauss_scale_max", "eps_grid", "tau",
                 "tau_jitter", "n_draws", "fit_eps_grid", "fit_n_draws", "n_boot",
                 "n_outer", "n_inner", "n_jobs", "divergence_threshold"),
        "defaults": {"eps_grid": [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25],
                     "tau": math.pi / 2, "n_draws": 200_000, "dim": 1},
    },
    "funnel-scan": {
        "keys": ("seed", "funnel_latent_dim", "funnel_scale", *_ADAPT_KEYS, "targets",
                 "n_chains", "n_exact_chains", "scan_coordinate", "relax_initial_target",
                 "relax_step", "relax_max_target", "relax_warmup", "relax_probe",
                 "relax_chains"),
        "defaults": {"tau": 4.0, "tau_jitter": 0.5, "relax_probe": 1000, "relax_chains": 4},
    },
    "sample": {
        "keys": ("seed", *_MODEL_KEYS, *_ADAPT_KEYS, "n_chains"),
        "defaults": {},
    },
    "scaling": {
        "keys": ("seed", "dim", "tau", "n_draws", "n_boot", "scaling_orders", "eps_grid_k2",
                 "eps_grid_k4", "moments_k2", "moments_k4", "synthetic"),
        "defaults": {"dim": 10, "tau": 2.4},
    },
}


def parse_pairs(lines, source="config"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    pairs = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        pairs[key] = value
    return pairs


class RunConfig:
    """Resolved configuration for one subcommand."""

    def __init__(self, subcommand, values):
        self.subcommand = subcommand
        self._values = values

    def __getitem__(self, key):
        return self._values[key]

    def __contains__(self, key):
        return key in self._values

    def as_dict(self):
        return dict(self._values)

    def to_text(self):
        lines = [f"# resolved configuration for {self.subcommand}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in self._values.items()]
        return "\n".join(lines) + "\n"


def resolve(subcommand, pairs):
    """Type-check ``pairs`` and fill defaults for ``subcommand``."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    spec = SUBCOMMANDS[subcommand]
    unknown = sorted(set(pairs) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    unused = sorted(set(pairs) - set(spec["keys"]))
    if unused:
        log.warning("keys not used by %s: %s", subcommand, ", ".join(unused))
    values = {}
    for key in spec["keys"]:
        kdef = KEYS[key]
        if key in pairs:
            raw = pairs[key]
            try:
                value = kdef.parse(raw) if isinstance(raw, str) else raw
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
        else:
            value = spec["defaults"].get(key, kdef.default)
        if value is None:
            raise ConfigError(f"missing required key: {key}")
        if kdef.choices is not None and value not in kdef.choices:
            raise ConfigError(f"{key} must be one of {list(kdef.choices)}, got {value!r}")
        values[key] = value
    return RunConfig(subcommand, values)


def load(subcommand, path=None, overrides=(), seed=None):
    """Read a config file, apply ``key=value`` overrides and ``--seed``."""
    pairs = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                pairs.update(parse_pairs(fh, str(path)))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    pairs.update(parse_pairs(overrides, "command line"))
    if seed is not None:
        pairs["seed"] = str(seed)
    return resolve(subcommand, pairs)
