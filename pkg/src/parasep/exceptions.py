"""Exception types raised across the package."""


class ParasepError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(ParasepError, ValueError):
    """The sampled function cannot seed an interpolant (e.g. it vanishes)."""


class LayoutError(ParasepError, ValueError):
    """A term layout is inconsistent with its interpolants or trial set."""


class IllConditionedError(ParasepError, ArithmeticError):
    """A small dense system needed by the method is numerically singular."""


class SingularMatrixError(ParasepError, ArithmeticError):
    """A full-order or reduced system matrix could not be factored."""

    def __init__(self, message, mu=None, rcond=None):
        super().__init__(message)
        self.mu = mu
        self.rcond = rcond


class ProviderError(ParasepError, RuntimeError):
    """The matrix provider failed while assembling at a parameter value."""

    def __init__(self, mu, cause=None):
        super().__init__(f"matrix provider failed at mu={mu!r}: {cause}")
        self.mu = mu


class UnsupportedOracleError(ParasepError, TypeError):
    """The provider does not expose the access needed for a reference model."""


class IllConditionedWarning(UserWarning):
    """Emitted when an interpolation system is close to singular."""
