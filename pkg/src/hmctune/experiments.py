"""Computations behind each ``hmc-tune`` subcommand.

Each ``cmd_*`` function takes a resolved :class:`~hmctune.config.RunConfig`
and returns ``{filename: Table}``; writing is left to the caller.  Random
streams for grid points are spawned from the run seed, so every table is a
deterministic function of the config.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import SCAN_COLUMNS, divergence_scan
from .error_stats import (
    MAX_DIVERGENT_FRACTION,
    check_global_constraint,
    cumulants,
    fit_alpha,
    inverse_acceptance_estimates,
    mean_acceptance,
    moment,
    power_law_fit,
    sample_errors,
    scaling_exponent,
)
from .exceptions import ContractViolationError, ExhaustionError
from .integrator import IntegrationTime, IntegratorConfig, analytic_mean_error_gaussian
from .model import GaussianModel, funnel, scaled_gaussian, standard_gaussian
from .sampler import ChainConfig, run_chains
from .tuning import acceptance_curve, cost_lower, cost_upper, optimal_acceptance, robust_target_search


@dataclass
class Table:
    columns: tuple
    rows: list


def build_model(cfg):
    if cfg["model"] == "funnel":
        return funnel(cfg["funnel_latent_dim"], cfg["funnel_scale"])
    return gaussian_from(cfg)


def gaussian_from(cfg):
    lo, hi = cfg["gauss_scale_min"], cfg["gauss_scale_max"]
    if lo == hi == 1.0:
        return standard_gaussian(cfg["dim"])
    return scaled_gaussian(np.linspace(lo, hi, cfg["dim"]))


def _streams(seed, n):
    return np.random.SeedSequence(seed).spawn(n)


def _unstable(errs, model=None):
    """Flag a grid point: too many divergences, or past the Gaussian stability limit."""
    if errs.n_divergent / errs.n > MAX_DIVERGENT_FRACTION:
        return True
    if isinstance(model, GaussianModel):
        return errs.eps >= 2.0 * float(np.min(model.scales))
    return False


def cmd_delta_scan(cfg):
    """Mean energy increase of leapfrog on the 1-D unit Gaussian over an (eps, tau) grid.

    ``mc_mean`` is the mean of ``-Delta``, the same sign as ``analytic``.
    ``analytic`` uses the nominal ``tau``; ``analytic_eff`` uses the realized
    time ``tau_eff = n_steps * eps``.
    """
    model = standard_gaussian(1)
    grid = [(e, t) for e in cfg["eps_grid"] for t in cfg["tau_grid"]]
    rows = []
    for (eps, tau), ss in zip(grid, _streams(cfg["seed"], len(grid))):
        time = IntegrationTime(tau)
        errs = sample_errors(model, ss, IntegratorConfig(eps), time, cfg["n_draws"],
                             cfg["n_jobs"], cfg["divergence_threshold"])
        m, se = moment(errs, 1)
        tau_eff = time.n_steps(eps) * eps
        rows.append((eps, tau, -m, se, analytic_mean_error_gaussian(eps, tau), tau_eff,
                     analytic_mean_error_gaussian(eps, tau_eff), errs.n_divergent,
                     int(_unstable(errs))))
    cols = ("eps", "tau", "mc_mean", "mc_se", "analytic", "tau_eff", "analytic_eff",
            "n_divergent", "unstable")
    return {"delta_scan.csv": Table(cols, rows)}


CONSTRAINT_COLUMNS = ("eps", "tau", "order", "n", "mean", "mean_se", "kappa1", "kappa2",
                      "kappa3", "kappa4", "exp_delta", "exp_delta_se", "n_divergent",
                      "kappa1_se", "kappa2_se", "kappa_combo", "kappa_combo_se")


def cmd_constraint_check(cfg):
    """``E[exp(Delta)]`` and ``kappa1 + kappa2/2`` per step size; both should vanish/equal 1."""
    model = build_model(cfg)
    time = IntegrationTime(cfg["tau"], cfg["tau_jitter"])
    order = 2 if cfg["integrator"] == "leapfrog" else 4
    rows = []
    for eps, ss in zip(cfg["eps_grid"], _streams(cfg["seed"], len(cfg["eps_grid"]))):
        if eps == 0.0:
            # exact flow: Delta is identically zero
            rows.append((0.0, cfg["tau"], order, cfg["n_draws"], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                         1.0, 0.0, 0, 0.0, 0.0, 0.0, 0.0))
            continue
        errs = sample_errors(model, ss, IntegratorConfig(eps, cfg["integrator"]), time,
                             cfg["n_draws"], cfg["n_jobs"], cfg["divergence_threshold"])
        m, m_se = moment(errs, 1)
        cs = cumulants(errs, cfg["n_boot"], np.random.default_rng(ss.spawn(1)[0]))
        ex, ex_se = check_global_constraint(errs)
        combo, combo_se = cs.combination([1.0, 0.5, 0.0, 0.0])
        rows.append((eps, cfg["tau"], order, errs.n, m, m_se, *cs.kappa, ex, ex_se,
                     errs.n_divergent, cs.standard_errors[0], cs.standard_errors[1],
                     combo, combo_se))
    return {"constraint_check.csv": Table(CONSTRAINT_COLUMNS, rows)}


def cmd_bounds(cfg):
    """Both cost bounds on an acceptance grid, plus their minimizers."""
    k = cfg["order"]
    # floor, so the grid never steps past accept_max
    n = int(math.floor((cfg["accept_max"] - cfg["accept_min"]) / cfg["accept_step"] + 1e-9)) + 1
    grid = np.round(cfg["accept_min"] + cfg["accept_step"] * np.arange(n), 12)
    lo, hi = cost_lower(grid, k), cost_upper(grid, k)
    rows = list(zip(grid.tolist(), lo.tolist(), hi.tolist()))
    summary = []
    for bound, f in (("lower", cost_lower), ("upper", cost_upper)):
        a = optimal_acceptance(k, bound)
        summary.append((k, bound, a, f(a, k)))
    return {
        "bounds.csv": Table(("a", "cost_lower", "cost_upper"), rows),
        "bounds_summary.csv": Table(("order", "bound", "argmin", "min_value"), summary),
    }


def cmd_gauss_experiment(cfg):
    """Acceptance curve and inverse-acceptance squeeze on a product Gaussian.

    File A compares empirical mean acceptance with the closed-form curve at
    the fitted ``alpha``.  File B holds the nested estimate of
    ``E_q[1/E_p[a]]`` between the Monte Carlo values of ``1/E[a]`` and
    ``E[1/a]``; the ``cost_*`` columns are those bounds divided by ``eps``.
    """
    model = gaussian_from(cfg)
    time = IntegrationTime(cfg["tau"], cfg["tau_jitter"])
    grid = cfg["eps_grid"]
    streams = _streams(cfg["seed"], 2 * len(grid) + 1)
    fit = fit_alpha(model, streams[0], 2, cfg["fit_eps_grid"], time, cfg["fit_n_draws"],
                    cfg["n_boot"])
    curve = fit.acceptance_model()
    rows_a, rows_b = [], []
    for i, eps in enumerate(grid):
        ic = IntegratorConfig(eps)
        errs = sample_errors(model, streams[1 + i], ic, time, cfg["n_draws"], cfg["n_jobs"],
                             cfg["divergence_threshold"])
        acc, acc_se = mean_acceptance(errs)
        unstable = _unstable(errs, model)
        rows_a.append((eps, acc, acceptance_curve(curve, eps), acc_se, errs.n_divergent,
                       int(unstable), fit.alpha))
        if unstable:
            continue
        est = inverse_acceptance_estimates(model, streams[1 + len(grid) + i], ic, time,
                                           cfg["n_outer"], cfg["n_inner"],
                                           cfg["divergence_threshold"])
        rows_b.append((est.mean_accept, est.nested, est.lower / eps, est.upper / eps, eps,
                       est.nested_se, est.lower, est.lower_se, est.upper, est.upper_se))
    cols_a = ("eps", "empirical_accept", "predicted_accept", "empirical_se", "n_divergent",
              "unstable", "alpha")
    cols_b = ("accept", "empirical_inv_accept", "cost_lower", "cost_upper", "eps",
              "empirical_inv_accept_se", "inv_accept_lower", "inv_accept_lower_se",
              "inv_accept_upper", "inv_accept_upper_se")
    return {"gauss_accept.csv": Table(cols_a, rows_a), "gauss_cost.csv": Table(cols_b, rows_b)}


def chain_config_from(cfg, n_samples=None):
    init = cfg["initial_position"]
    return ChainConfig(
        n_samples=n_samples or cfg["n_samples"],
        seed=cfg["seed"],
        n_warmup=cfg["adapt_warmup"],
        integrator=IntegratorConfig(cfg["step_size"], cfg["integrator"]),
        time=IntegrationTime(cfg["tau"], cfg["tau_jitter"]),
        adapt=cfg["adapt"],
        target_accept=cfg["target_accept"],
        initial_position=None if init == "default" else init,
        da_gamma=cfg["da_gamma"],
        da_t0=cfg["da_t0"],
        da_kappa=cfg["da_kappa"],
        divergence_threshold=cfg["divergence_threshold"],
    )


def _scan_row(r):
    return (r.target, r.achieved_accept, r.step_size, r.n_divergent, r.rhat_v)


def cmd_funnel_scan(cfg):
    """Divergences and R-hat_v across targets, then the relaxed recommendation.

    Raises :class:`ExhaustionError` after the scan if no target is
    divergence-free; the partial tables are attached to the error.
    """
    model = funnel(cfg["funnel_latent_dim"], cfg["funnel_scale"])
    base = chain_config_from(cfg)
    scan_kw = dict(n_chains=cfg["n_chains"], parallelism=cfg["parallelism"],
                   coordinate=cfg["scan_coordinate"], n_exact_chains=cfg["n_exact_chains"])
    rows = divergence_scan(model, cfg["targets"], base, **scan_kw)
    tables = {"funnel_scan.csv": Table(SCAN_COLUMNS, [_scan_row(r) for r in rows])}
    # probes use their own seed range so they never reuse scan chains
    probe_base = replace(base, seed=base.seed + 500)
    try:
        report = robust_target_search(
            model, probe_base, cfg["relax_initial_target"], cfg["relax_step"],
            cfg["relax_max_target"], cfg["relax_warmup"], cfg["relax_probe"],
            cfg["relax_chains"], cfg["parallelism"])
    except ExhaustionError as exc:
        exc.tables = tables
        raise
    tables["funnel_relaxation.csv"] = Table(("target", "n_divergent"), report.relaxation_trace)
    rec = report.target_acceptance
    match = [r for r in rows if math.isclose(r.target, rec, abs_tol=1e-9)]
    rec_row = match[0] if match else divergence_scan(model, [rec], base, **scan_kw)[0]
    tables["funnel_recommendation.csv"] = Table(
        ("recommended_target", "achieved_accept", "step_size", "n_divergent", "rhat_v",
         "probe_accept", "probe_step_size", "n_exact_chains"),
        [(rec, rec_row.achieved_accept, rec_row.step_size, rec_row.n_divergent,
          rec_row.rhat_v, report.achieved_acceptance, report.final_step_size,
          cfg["n_exact_chains"])])
    return tables


def cmd_sample(cfg):
    """Run ``n_chains`` chains; chain ``c`` uses seed ``seed + c``."""
    model = build_model(cfg)
    base = chain_config_from(cfg)
    configs = [replace(base, seed=base.seed + c) for c in range(cfg["n_chains"])]
    outs = run_chains(model, configs, cfg["parallelism"])
    d = model.dim
    draw_rows, rec_rows, chain_rows = [], [], []
    for c, out in enumerate(outs):
        n_warm = len(out.warmup_records)
        for i, q in enumerate(out.draws):
            draw_rows.append((c, i, *q.tolist()))
        for i, r in enumerate(out.records):
            rec_rows.append((c, i - n_warm, int(r.accepted), r.delta, r.accept_prob,
                             int(r.divergent), r.n_steps, r.step_size_used))
        chain_rows.append((c, configs[c].seed, out.adapted_step_size, out.acceptance_rate,
                           out.n_divergent))
    return {
        "draws.csv": Table(("chain", "iter", *[f"q{j}" for j in range(d)]), draw_rows),
        "records.csv": Table(("chain", "iter", "accepted", "delta", "accept_prob", "divergent",
                              "n_steps", "step_size"), rec_rows),
        "chains.csv": Table(("chain", "seed", "step_size", "acceptance_rate", "n_divergent"),
                            chain_rows),
    }


def expected_slope(k, n):
    """Leading log-log slope of the n-th error moment for an order-k integrator."""
    return k * (n + 1) if n % 2 else k * n


def cmd_scaling(cfg):
    """Log-log slopes of error moments against the step size.

    ``moment_n = 1`` fits ``|E[Delta]|``; ``moment_n = 2`` fits ``kappa2``.
    With ``synthetic = true`` exact power laws are fitted instead of draws.
    """
    model = standard_gaussian(cfg["dim"])
    time = IntegrationTime(cfg["tau"])
    jobs = [(k, n) for k in cfg["scaling_orders"] for n in cfg[f"moments_k{k}"]]
    rows = []
    for (k, n), ss in zip(jobs, _streams(cfg["seed"], len(jobs))):
        grid = cfg[f"eps_grid_k{k}"]
        expected = expected_slope(k, n)
        if cfg["synthetic"]:
            slope, slope_se, _, _ = power_law_fit(grid, np.asarray(grid) ** expected)
            slope_se = 0.0 if not np.isfinite(slope_se) else slope_se
        elif n == 1:
            slope, slope_se = scaling_exponent(model, ss, 1, IntegratorConfig.from_order(0.1, k),
                                               grid, time, cfg["n_draws"])
        elif n == 2:
            fit = fit_alpha(model, ss, k, grid, time, cfg["n_draws"], cfg["n_boot"])
            slope, slope_se = fit.slope, fit.slope_se
        else:
            raise ContractViolationError(f"moment_n must be 1 or 2, got {n}")
        rows.append((k, n, slope, slope_se, expected))
    return {"scaling.csv": Table(("order", "moment_n", "slope", "slope_se", "expected_slope"),
                                 rows)}


COMMANDS = {
    "delta-scan": cmd_delta_scan,
    "constraint-check": cmd_constraint_check,
    "bounds": cmd_bounds,
    "gauss-experiment": cmd_gauss_experiment,
    "funnel-scan": cmd_funnel_scan,
    "sample": cmd_sample,
    "scaling": cmd_scaling,
}
