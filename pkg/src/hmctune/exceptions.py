"""Exception hierarchy shared by every module."""


class HMCTuneError(Exception):
    """Base class for all package errors."""


class ContractViolationError(HMCTuneError, ValueError):
    """An argument breaks a documented precondition (shape, length, ordering)."""


class DomainError(HMCTuneError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class UnsupportedOperationError(HMCTuneError, NotImplementedError):
    """The requested operation is not available for this model or scheme."""


class StatisticalPreconditionError(HMCTuneError):
    """A statistical procedure could not run on the data it was given."""


class UnstableRegimeError(StatisticalPreconditionError):
    """Too many divergent draws at a step size that should be stable."""

    def __init__(self, message, step_size=None, divergent_fraction=None):
        super().__init__(message)
        self.step_size = step_size
        self.divergent_fraction = divergent_fraction


class InsufficientSignalError(StatisticalPreconditionError):
    """An estimate is statistically indistinguishable from zero."""


class DegenerateVarianceError(StatisticalPreconditionError):
    """All within-chain variances vanish, so R-hat is undefined."""


class ExhaustionError(StatisticalPreconditionError):
    """Divergences persisted up to the maximum allowed acceptance target."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ChainError(HMCTuneError):
    """Failure inside one chain of a multi-chain run."""

    def __init__(self, chain_index, original):
        super().__init__(f"chain {chain_index} failed: {original!r}")
        self.chain_index = chain_index
        self.original = original


class ConfigError(HMCTuneError, ValueError):
    """Invalid run configuration (unknown key, bad value, missing seed)."""
