"""Step-size tuning for Hamiltonian Monte Carlo.

Closed-form acceptance and cost bounds, Monte Carlo statistics of the
Hamiltonian error, dual-averaging adaptation with divergence-aware target
relaxation, and the diagnostics to check the result.
"""

__version__ = "0.1.0"

from .diagnostics import (
    DivergencePolicy,
    RhatResult,
    detect_divergence,
    divergence_scan,
    rhat_with_exact,
    split_rhat,
)
from .error_stats import (
    AlphaFit,
    CumulantSet,
    ErrorSampleSet,
    check_global_constraint,
    cumulants,
    fit_alpha,
    inverse_acceptance_estimates,
    moment,
    sample_errors,
    scaling_exponent,
)
from .estimators import AcceptanceCurve, HMCSampler, RobustStepSizeTuner
from .exceptions import (
    ChainError,
    ConfigError,
    ContractViolationError,
    DegenerateVarianceError,
    DomainError,
    ExhaustionError,
    HMCTuneError,
    InsufficientSignalError,
    StatisticalPreconditionError,
    UnstableRegimeError,
    UnsupportedOperationError,
)
from .integrator import (
    IntegrationTime,
    IntegratorConfig,
    Trajectory,
    analytic_mean_error_gaussian,
    correction_G,
    hamiltonian_error,
    integrate,
    leapfrog_step,
    propose,
    yoshida4_step,
)
from .model import (
    MODEL_CATALOG,
    FunnelModel,
    GaussianModel,
    PhaseState,
    TargetModel,
    exact_canonical_sample,
    funnel,
    hamiltonian,
    kinetic_energy,
    potential_energy,
    sample_momentum,
    scaled_gaussian,
    standard_gaussian,
)
from .sampler import ChainConfig, ChainOutput, TransitionRecord, hmc_transition, run_chain, run_chains
from .tuning import (
    AcceptanceModel,
    CostBounds,
    DualAveragingState,
    TuningReport,
    acceptance_curve,
    adapt_step,
    cost_bounds,
    cost_lower,
    cost_upper,
    epsilon_for_acceptance,
    expected_inverse_acceptance,
    optimal_acceptance,
    robust_target_search,
)
