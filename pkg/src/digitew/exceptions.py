"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes, so each class carries one.
"""


class DigitewError(Exception):
    exit_code = 1


class DigitValidationError(DigitewError, ValueError):
    """A digit string violates the digit constraints of its system."""


class InsufficientBaseError(DigitewError, ValueError):
    """A finite Cantor quotient description is too short for the request."""


class ParameterError(DigitewError, ValueError):
    pass


class DomainError(DigitewError, ValueError):
    """Operation not defined for the given numeration system."""


class DegenerateInputError(DigitewError, ValueError):
    pass


class CriterionError(DigitewError):
    """A required series is divergent or its convergence cannot be certified."""

    exit_code = 2


class HypothesisError(DigitewError):
    """Theorem hypothesis violated (typically the window h exceeds L)."""

    exit_code = 3


class CapacityError(DigitewError):
    """A resource cap (atom budget, oracle cap) was exceeded."""

    exit_code = 4


class ResolutionError(CapacityError):
    """Quadrature grid needed to resolve the integrand exceeds the budget.

    ``partial_bound`` is a valid upper bound obtained at the finest
    affordable resolution.
    """

    def __init__(self, message, partial_bound=None):
        super().__init__(message)
        self.partial_bound = partial_bound
