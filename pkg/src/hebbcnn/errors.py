"""Exception types shared across the package."""


class HebbError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeError(HebbError, ValueError):
    """Tensor dimensions are inconsistent with an operation's contract."""


class DataError(HebbError, ValueError):
    """Input data is malformed, out of range, or non-finite."""


class FitError(HebbError, RuntimeError):
    """A fitting procedure cannot proceed (too few samples, singular system)."""


class FormatError(HebbError, ValueError):
    """A binary file does not match its expected layout."""


class CompatibilityError(HebbError, ValueError):
    """Stored state does not match the expected configuration."""


class ConfigError(HebbError, ValueError):
    """Configuration text is malformed or contains unknown keys."""
