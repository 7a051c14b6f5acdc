"""Exception hierarchy.

Every error raised by the library derives from :class:`CrossIntentError`.
Data/validation problems derive from :class:`ValidationError` (CLI exit
code 1); filesystem problems surface as :class:`IoError` (exit code 2).
"""


class CrossIntentError(Exception):
    """Base class for all library errors."""


class ValidationError(CrossIntentError, ValueError):
    """Input data violates a documented precondition."""


class IoError(CrossIntentError, OSError):
    """Reading or writing an artifact failed."""


# geometry / tracking
class NonPositiveExtent(ValidationError):
    pass


class SingularInnovation(CrossIntentError, ArithmeticError):
    """Innovation covariance could not be factorised; the track covariance is corrupt."""


class ZeroVector(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonMonotonicFrameIndex(ValidationError):
    pass


# features
class DegenerateHeight(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


# learning
class EmptyData(ValidationError):
    pass


class SingleClassTraining(ValidationError):
    pass


class SingleClassData(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


# dataset io / evaluation
class UnknownLabel(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class SchemaVersionMismatch(ValidationError):
    pass


class MissingAnnotation(ValidationError):
    pass
