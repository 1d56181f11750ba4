"""Exception hierarchy shared across the package.

``InputError`` covers anything wrong with user-supplied files or options
(CLI exit code 2); ``ComputeError`` covers failures of the numerical
procedures themselves (CLI exit code 1).
"""


class CnadaptError(Exception):
    pass


class InputError(CnadaptError):
    pass


class ParseError(InputError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(InputError):
    pass


class ComputeError(CnadaptError):
    pass


class TrainingError(ComputeError):
    pass


class EstimationError(ComputeError):
    pass


class EvaluationError(ComputeError):
    pass
