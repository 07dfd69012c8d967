"""Exception hierarchy.

Numerical failures and configuration failures are kept apart so the CLI can
map them to distinct exit codes.
"""


class KoopfamError(Exception):
    """Base class for all errors raised by koopfam."""


class ConfigError(KoopfamError, ValueError):
    """Invalid system definition, catalog request or run configuration."""


class NumericalError(KoopfamError):
    """A computation could not produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """An eigen iteration (or similar) did not converge."""


class DomainError(NumericalError, ValueError):
    """Arguments lie outside the domain of the operation."""


class RankError(NumericalError):
    """A snapshot stencil has no usable numerical rank."""


class UnsupportedSystemError(NumericalError):
    """The requested oracle is not available for this system variant."""


class OriginError(NumericalError):
    """A trajectory passes through the origin of a polar coordinate pair."""


class AliasingError(NumericalError):
    """Per-step phase increments are too large to be resolved unambiguously."""


class WarmupError(NumericalError):
    """The first stencil is already flagged, so no operator can be reused."""


class IllConditionedError(NumericalError):
    """An eigenbasis is defective or too ill-conditioned to be used."""
