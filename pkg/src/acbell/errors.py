"""Exception hierarchy.

Errors deriving from :class:`ComputationError` signal a numerically or
physically undefined quantity (exit code 2 in the CLI); everything else
is an input/validation problem (exit code 1).
"""


class ACBellError(Exception):
    pass


class InvalidGroupingError(ACBellError, ValueError):
    pass


class UnnormalizedStateError(ACBellError, ValueError):
    pass


class PathNotClosedError(ACBellError, ValueError):
    pass


class ConfigError(ACBellError, ValueError):
    pass


class ComputationError(ACBellError):
    pass


class SingularityError(ComputationError):
    pass


class AccuracyError(ComputationError):
    pass


class NumericalInconsistencyError(ComputationError):
    pass


class UndefinedCorrelationError(ComputationError):
    pass


class ScanError(ComputationError):
    pass


class PathValidationError(ComputationError):
    def __init__(self, contour: str, message: str):
        super().__init__(f"{contour}: {message}")
        self.contour = contour
