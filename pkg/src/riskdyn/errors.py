"""Exception types shared across riskdyn."""


class RiskDynError(Exception):
    """Base class for all riskdyn errors."""


class ValidationError(RiskDynError, ValueError):
    """Input data or parameters violate a documented constraint."""


class NumericalError(RiskDynError, ArithmeticError):
    """A numerical routine failed to converge or left its valid domain."""


class StepSizeError(NumericalError):
    """An ODE trajectory left [0, 1] even after step-size halving."""


class ParameterizationError(NumericalError):
    """A closed form was evaluated outside the domain of its parameterization."""


class InsufficientDataError(NumericalError):
    """Too few usable points for a regression."""


class ImpossibleTransitionError(NumericalError):
    """An observed transition has probability zero under the model.

    ``t`` is the (0-based) row of the history at which the transition lands
    and ``i`` the 0-based risk index.
    """

    def __init__(self, t, i, message=None):
        self.t = t
        self.i = i
        super().__init__(message or f"impossible transition at row {t}, risk index {i}")


class NonNestedError(RiskDynError, ValueError):
    """Likelihood-ratio test requested for models that are not nested."""
