"""Exception hierarchy shared across the package."""


class WavemarkError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(WavemarkError):
    """Malformed input file (ragged CSV row, bad header, empty file)."""


class ValidationError(WavemarkError):
    """Input violates a documented precondition or invariant."""


class DimensionError(ValidationError):
    """Array shapes or sizes are incompatible with the requested operation."""


class DomainError(WavemarkError):
    """Mathematically invalid input (zero vector for an angle, dmp out of range)."""


class DegenerateMassError(DomainError):
    """A probability mass that the operation must divide by is zero."""


class NumericError(WavemarkError):
    """Computation lost all probability mass or otherwise degenerated numerically."""


class ConfigError(WavemarkError):
    """Invalid benchmark or service configuration."""
