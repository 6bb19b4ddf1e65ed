"""Exception and warning classes raised across the package."""


class PovmTomoError(Exception):
    """Base class for all package errors."""


class NonHermitianInput(PovmTomoError, ValueError):
    pass


class IndefiniteInput(PovmTomoError, ValueError):
    pass


class DimensionMismatch(PovmTomoError, ValueError):
    pass


class ShapeMismatch(PovmTomoError, ValueError):
    pass


class NonRealDiagonal(PovmTomoError, ValueError):
    pass


class InvalidState(PovmTomoError, ValueError):
    """A matrix offered as a density matrix is not Hermitian, unit-trace and PSD."""


class EmptyData(PovmTomoError, ValueError):
    pass


class InvalidProbabilities(PovmTomoError, ValueError):
    pass


class IndefiniteG(PovmTomoError, ArithmeticError):
    """The D-form normalisation operator lost positivity.

    This cannot happen for valid inputs and points at a bug rather than at
    the data.
    """


class NoFeasibleStart(PovmTomoError, RuntimeError):
    pass


class FileFormatError(PovmTomoError, ValueError):
    """Malformed experiment/result document; the message carries the JSON path."""


class NotConvergedWarning(UserWarning):
    pass


class DegenerateDataWarning(UserWarning):
    pass


class RankDeficientProbesWarning(UserWarning):
    pass
