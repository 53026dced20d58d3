"""Exception hierarchy.  ``exit_code`` is what the CLI returns for each family."""


class FFDROMError(Exception):
    exit_code = 1


class ConfigError(FFDROMError, ValueError):
    exit_code = 2


class BoundsError(ConfigError):
    pass


class DomainError(FFDROMError, ValueError):
    exit_code = 2


class ShapeError(FFDROMError, ValueError):
    exit_code = 2


class NumericError(FFDROMError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericError):
    def __init__(self, message: str, residual: float | None = None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history


class DegenerateInputError(NumericError):
    pass


class ExtrapolationError(NumericError):
    pass


class IllPosedFitError(NumericError):
    pass


class InsufficientDataError(NumericError):
    pass


class NoRefinement(NumericError):
    """All error indicators vanish; there is nowhere to refine."""


class IntegrityError(FFDROMError):
    exit_code = 4
