"""Exception hierarchy.

Every error raised on purpose by the library derives from ``SketchLabError``;
the CLI maps ``ConfigError`` and bad-argument errors to exit code 2 and
numeric failures to 3.
"""


class SketchLabError(Exception):
    """Base class for library errors."""


class ConfigError(SketchLabError, ValueError):
    """Invalid configuration, input file, or argument combination."""


class InvalidSparsity(SketchLabError, ValueError):
    pass


class ZeroDimension(SketchLabError, ValueError):
    pass


class DimensionMismatch(SketchLabError, ValueError):
    pass


class NotOrthonormal(SketchLabError, ValueError):
    pass


class QOutOfRange(SketchLabError, ValueError):
    pass


class InsufficientSamples(SketchLabError, ValueError):
    pass


class BudgetExceeded(SketchLabError, RuntimeError):
    pass


class UnsupportedDescriptor(SketchLabError, TypeError):
    pass


class MissingInput(SketchLabError, ValueError):
    pass


class InvalidInput(SketchLabError, ValueError):
    pass


class EpsilonOutOfRange(SketchLabError, ValueError):
    pass


class NoFixedPoint(SketchLabError, RuntimeError):
    pass


class CalibrationBudgetExceeded(SketchLabError, RuntimeError):
    pass


class BadBlockStructure(SketchLabError, ValueError):
    pass


class NonConvergence(SketchLabError, RuntimeError):
    pass


class ZeroResidual(SketchLabError, ValueError):
    pass


class InactiveConstraint(SketchLabError, ValueError):
    pass


class MissingCertificates(SketchLabError, ValueError):
    pass


class BadDimension(SketchLabError, ValueError):
    pass


class MOutOfRange(SketchLabError, ValueError):
    pass


class RaggedRows(ConfigError):
    pass


class NonNumeric(ConfigError):
    pass


class IoError(ConfigError):
    """Missing or unreadable input file."""
