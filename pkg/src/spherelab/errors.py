"""Exception hierarchy shared by all modules."""


class SpherelabError(Exception):
    """Base class for errors raised by this package."""


class IntegrationError(SpherelabError):
    """An initial-value integration could not be completed."""


class NonFiniteRhs(IntegrationError):
    """The right-hand side returned NaN or inf (a singular region was hit)."""


class DerivativeSingular(NonFiniteRhs):
    """x' vanished, so x''' cannot be solved for."""


class DenominatorVanished(NonFiniteRhs):
    """g - 2 g' s vanished in the pole-regular formulation."""


class StepSizeTooSmall(IntegrationError):
    """Step size underflowed while the error estimate stayed finite."""


class StepLimitReached(IntegrationError):
    """``max_steps`` accepted steps were taken before the end of the span."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class BlowUp(IntegrationError):
    """The state exceeded ``blow_up_norm`` before the requested end time."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class OutOfDomain(SpherelabError, ValueError):
    """Evaluation requested outside the solved or admissible domain."""


class DomainExceeded(SpherelabError):
    """A flow left the range where the profile function can be provided."""


class ParameterOutOfWindow(SpherelabError, ValueError):
    """tau lies outside the existence window (-T, T)."""


class BadBracket(SpherelabError):
    """Bracket endpoints do not carry opposite orbit classifications."""


class BudgetExhausted(SpherelabError):
    """Too many undetermined classifications during bisection."""
