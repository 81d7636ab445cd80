"""Exception types shared by the solvers."""


class SimpleGasError(Exception):
    """Base class for solver errors."""


class GridMismatch(SimpleGasError, ValueError):
    pass


class TorusMismatch(SimpleGasError, ValueError):
    pass


class DegeneratePotential(SimpleGasError, ValueError):
    pass


class ResolutionLimit(SimpleGasError, ValueError):
    """The requested state needs a discretization beyond the configured cap."""


class DiscriminantNegative(SimpleGasError, ArithmeticError):
    pass


class NonConvergence(SimpleGasError, RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class BracketingFailure(SimpleGasError, RuntimeError):
    pass


class NoDecay(SimpleGasError, RuntimeError):
    pass


class LinearSolveFailure(SimpleGasError, RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class DenominatorNearZero(SimpleGasError, ArithmeticError):
    pass


class PositivityLoss(SimpleGasError, RuntimeError):
    pass
