"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI maps it to.
"""


class GaitkitError(Exception):
    exit_code = 1


class ValidationError(GaitkitError):
    """Input violates a structural invariant (ordering, shapes, ranges)."""

    exit_code = 2


class ParseError(ValidationError):
    """Malformed text input. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ValidationError):
    """Bad magic header, unknown version or inconsistent container content."""


class ParameterError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    """Numerically degenerate input, e.g. a constant vector where variation is required."""


class UsageError(GaitkitError):
    exit_code = 2


class InsufficientDataError(GaitkitError):
    exit_code = 3


class NoGaitDetectedError(InsufficientDataError):
    pass


class NoCyclesError(InsufficientDataError):
    pass


class DegenerateCycleError(GaitkitError):
    exit_code = 3


class HeadingDegenerateError(DegenerateCycleError):
    pass


class ConvergenceError(GaitkitError):
    exit_code = 4

    def __init__(self, message, violation=None):
        self.violation = violation
        super().__init__(message)
