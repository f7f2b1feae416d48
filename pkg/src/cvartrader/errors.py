"""Exception types raised across the package."""


class CVaRTraderError(Exception):
    """Base class for all package errors."""


class ParseError(CVaRTraderError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(CVaRTraderError, ValueError):
    pass


class EmptyInputError(CVaRTraderError, ValueError):
    pass


class InsufficientDataError(CVaRTraderError, ValueError):
    pass


class ParameterError(CVaRTraderError, ValueError):
    pass


class ShapeError(CVaRTraderError, ValueError):
    pass


class DomainError(CVaRTraderError, ValueError):
    pass


class ConsistencyError(CVaRTraderError, ValueError):
    pass


class NumericError(CVaRTraderError, ArithmeticError):
    def __init__(self, message: str, step: int | None = None, iteration: int | None = None):
        self.step = step
        self.iteration = iteration
        super().__init__(message)


class InfeasibleError(CVaRTraderError, ArithmeticError):
    pass
