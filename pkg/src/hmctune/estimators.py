"""Estimator-style wrappers: configure with constructor args, ``fit``, then use.

These follow scikit-learn conventions (``get_params``/``set_params``,
trailing-underscore fitted attributes, ``NotFittedError`` before ``fit``)
so they compose with its model-selection tooling.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_random_state
from .error_stats import fit_alpha_from_kappa2
from .integrator import DEFAULT_DIVERGENCE_THRESHOLD, IntegrationTime, IntegratorConfig
from .sampler import ChainConfig, _initial_position, sample, warmup
from .tuning import (
    acceptance_curve,
    epsilon_for_acceptance,
    optimal_acceptance,
    robust_target_search,
)


def _chain_config(est, seed, target=None):
    return ChainConfig(
        n_samples=1,
        seed=seed,
        n_warmup=est.n_warmup,
        integrator=IntegratorConfig(est.step_size, est.integrator),
        time=IntegrationTime(est.tau, est.tau_jitter),
        adapt=est.adapt,
        target_accept=est.target_accept if target is None else target,
        divergence_threshold=est.divergence_threshold,
    )


class HMCSampler(BaseEstimator):
    """HMC with dual-averaging step-size adaptation.

    ``fit`` runs warmup on ``n_chains`` chains and freezes the step size;
    ``sample`` then draws from the warmed-up chains.

    Parameters
    ----------
    model : TargetModel
    step_size : float
        Initial step size (the fixed one when ``adapt=False``).
    integrator : {"leapfrog", "yoshida4"}
    tau, tau_jitter : float
        Integration time and its relative uniform jitter.
    target_accept : float
        Mean acceptance the adaptation aims for.
    n_warmup : int
    adapt : bool
    n_chains : int
    random_state : None, int or Generator

    Attributes
    ----------
    step_size_ : float
        Adapted step size, averaged over chains.
    positions_ : ndarray of shape (n_chains, n_features)
        Chain positions at the end of warmup (advanced by ``sample``).
    warmup_acceptance_ : float
    n_divergent_warmup_ : int
    n_features_in_ : int
    """

    def __init__(self, model=None, step_size=0.1, integrator="leapfrog", tau=1.0,
                 tau_jitter=0.0, target_accept=0.8, n_warmup=1000, adapt=True, n_chains=1,
                 random_state=None, divergence_threshold=DEFAULT_DIVERGENCE_THRESHOLD):
        self.model = model
        self.step_size = step_size
        self.integrator = integrator
        self.tau = tau
        self.tau_jitter = tau_jitter
        self.target_accept = target_accept
        self.n_warmup = n_warmup
        self.adapt = adapt
        self.n_chains = n_chains
        self.random_state = random_state
        self.divergence_threshold = divergence_threshold

    def fit(self, X=None, y=None):
        """Warm up the chains.

        ``X`` optionally holds initial positions, one row per chain; by
        default the model's initializer is used.
        """
        if self.model is None:
            raise ValueError("HMCSampler needs a model")
        d = self.model.dim
        rng = check_random_state(self.random_state)
        seeds = rng.integers(0, 2**63 - 1, size=self.n_chains)
        if X is not None:
            X = check_array(X, ensure_min_features=d)
            if X.shape != (self.n_chains, d):
                raise ValueError(f"X must have shape ({self.n_chains}, {d}), got {X.shape}")
        self._rngs = [np.random.default_rng(int(s)) for s in seeds]
        positions, steps, accept, n_div = [], [], [], 0
        for c in range(self.n_chains):
            cfg = _chain_config(self, int(seeds[c]))
            q0 = X[c] if X is not None else _initial_position(self.model, None, self._rngs[c])
            q, eps, recs = warmup(self.model, cfg, self._rngs[c], np.asarray(q0, dtype=float))
            positions.append(q)
            steps.append(eps)
            accept.extend(r.accept_prob for r in recs)
            n_div += sum(r.divergent for r in recs)
        self.positions_ = np.array(positions)
        self.chain_step_sizes_ = np.array(steps)
        self.step_size_ = float(np.mean(steps))
        self.warmup_acceptance_ = float(np.mean(accept)) if accept else np.nan
        self.n_divergent_warmup_ = int(n_div)
        self.n_features_in_ = d
        return self

    def sample(self, n_samples):
        """Draw ``n_samples`` per chain; returns shape ``(n_chains, n_samples, d)``.

        Also sets ``acceptance_rate_`` and ``n_divergent_`` for this batch.
        """
        check_is_fitted(self, "step_size_")
        time = IntegrationTime(self.tau, self.tau_jitter)
        out = np.empty((self.n_chains, n_samples, self.n_features_in_))
        accept, n_div = [], 0
        for c in range(self.n_chains):
            cfg = IntegratorConfig(self.chain_step_sizes_[c], self.integrator)
            draws, recs = sample(self.model, self._rngs[c], self.positions_[c], cfg, time,
                                 n_samples, self.divergence_threshold)
            out[c] = draws
            self.positions_[c] = draws[-1]
            accept.extend(r.accept_prob for r in recs)
            n_div += sum(r.divergent for r in recs)
        self.acceptance_rate_ = float(np.mean(accept))
        self.n_divergent_ = int(n_div)
        return out


class AcceptanceCurve(BaseEstimator):
    """Acceptance as a function of step size, learned from ``kappa2`` estimates.

    ``fit(X, y)`` takes step sizes as a single-column ``X`` and the matching
    error variances ``y``, fits ``kappa2 = alpha eps^(2k)`` and ``predict``
    returns the implied mean acceptance probability.
    """

    def __init__(self, k=2):
        self.k = k

    def fit(self, X, y):
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError(f"X must have a single column of step sizes, got {X.shape[1]}")
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1)).ravel()
        if y.size != X.shape[0]:
            raise ValueError("X and y have different lengths")
        self.fit_ = fit_alpha_from_kappa2(X[:, 0], y, self.k)
        self.alpha_ = self.fit_.alpha
        self.model_ = self.fit_.acceptance_model()
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return np.array([acceptance_curve(self.model_, float(e)) for e in X[:, 0]])

    def step_size_for(self, acceptance):
        """Step size at which the fitted curve gives ``acceptance``."""
        check_is_fitted(self, "model_")
        return epsilon_for_acceptance(self.model_, acceptance)

    def optimal_step_size(self, bound="lower"):
        """Step size at the optimum of the chosen cost bound."""
        return self.step_size_for(optimal_acceptance(self.k, bound))


class RobustStepSizeTuner(BaseEstimator):
    """Relax the acceptance target until probe chains stop diverging.

    Attributes
    ----------
    target_accept_ : float
        First divergence-free target.
    step_size_ : float
    report_ : TuningReport
    """

    def __init__(self, model=None, initial_target=0.65, step=0.05, max_target=0.99,
                 n_warmup=500, n_probe=500, n_chains=1, step_size=0.1, integrator="leapfrog",
                 tau=1.0, tau_jitter=0.0, random_state=0,
                 divergence_threshold=DEFAULT_DIVERGENCE_THRESHOLD):
        self.model = model
        self.initial_target = initial_target
        self.step = step
        self.max_target = max_target
        self.n_warmup = n_warmup
        self.n_probe = n_probe
        self.n_chains = n_chains
        self.step_size = step_size
        self.integrator = integrator
        self.tau = tau
        self.tau_jitter = tau_jitter
        self.random_state = random_state
        self.divergence_threshold = divergence_threshold

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("RobustStepSizeTuner needs a model")
        seed = self.random_state
        if not isinstance(seed, (int, np.integer)):
            seed = int(check_random_state(seed).integers(0, 2**62))
        base = ChainConfig(
            n_samples=self.n_probe, seed=int(seed), n_warmup=self.n_warmup,
            integrator=IntegratorConfig(self.step_size, self.integrator),
            time=IntegrationTime(self.tau, self.tau_jitter),
            target_accept=self.initial_target,
            divergence_threshold=self.divergence_threshold)
        self.report_ = robust_target_search(
            self.model, base, self.initial_target, self.step, self.max_target,
            self.n_warmup, self.n_probe, self.n_chains)
        self.target_accept_ = self.report_.target_acceptance
        self.step_size_ = self.report_.final_step_size
        return self
