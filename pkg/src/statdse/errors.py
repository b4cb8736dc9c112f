"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`StatDSEError` and belongs to one of four categories. The CLI maps
the category to a process exit code.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_NOT_COVERED = 5


class StatDSEError(Exception):
    category = "error"
    exit_code = 1


class ConfigurationError(StatDSEError, ValueError):
    category = "configuration"
    exit_code = EXIT_CONFIGURATION


class ArgumentError(ConfigurationError):
    """Bad argument to a library call (dimension mismatch, wrong lengths)."""


class ManifestError(ConfigurationError):
    pass


class DataError(StatDSEError, ValueError):
    category = "data"
    exit_code = EXIT_DATA


class FormatError(DataError):
    """Malformed model file."""


class IngestionError(DataError):
    pass


class OutOfDomainError(DataError):
    pass


class UndefinedCorrelationError(DataError):
    pass


class EvaluationError(StatDSEError):
    """An evaluator could not produce objective values for a point."""

    category = "data"
    exit_code = EXIT_DATA


class NotCoveredError(EvaluationError):
    category = "not_covered"
    exit_code = EXIT_NOT_COVERED


class RunAbortedError(EvaluationError):
    pass


class NumericalError(StatDSEError, ArithmeticError):
    category = "numerical"
    exit_code = EXIT_NUMERICAL


class SingularFitError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
