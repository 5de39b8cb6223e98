"""Exception hierarchy.

Each family carries the process exit code the CLI uses for it.
"""


class HomcError(Exception):
    exit_code = 1


class InputError(HomcError):
    """Unreadable, malformed or inconsistent input files."""

    exit_code = 3


class ValidationError(HomcError, ValueError):
    """Arguments that violate an operation's preconditions."""

    exit_code = 4


class BoundsError(ValidationError, IndexError):
    pass


class UnsupportedOrderError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class ExtrapolationError(ValidationError):
    pass


class NumericalError(HomcError, ArithmeticError):
    exit_code = 5


class SingularCovarianceError(NumericalError):
    def __init__(self, message, bands=()):
        super().__init__(message)
        self.bands = tuple(bands)


class UndefinedAngleError(NumericalError):
    pass


class UndefinedRocError(NumericalError):
    pass


class DegenerateSelectionError(HomcError):
    """Every candidate removal yields a singular dependency matrix."""

    exit_code = 6

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)
