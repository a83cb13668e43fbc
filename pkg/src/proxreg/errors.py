"""Exception types raised by proxreg."""


class ProxRegError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(ProxRegError, ValueError):
    pass


class TubeViolation(ProxRegError, ValueError):
    """The point lies outside the region where the projection is single-valued."""


class NonconvergedFD(ProxRegError, ArithmeticError):
    pass


class SingularMap(ProxRegError, ValueError):
    pass


class QualificationFailure(ProxRegError, ValueError):
    pass


class StepTooLarge(ProxRegError, ValueError):
    pass


class IntegrationError(ProxRegError):
    """A step failed; ``partial`` holds the trajectory up to ``step``."""

    def __init__(self, message, step, partial, cause=None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.partial = partial
        self.cause = cause


class CapSearchOverflow(ProxRegError, ArithmeticError):
    pass


class NoSolutionInGrid(ProxRegError):
    """Resolvent search could not drive the residual below the floor.

    ``best`` is the minimizer found on the set, ``residual`` its merit value.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class DomainViolation(ProxRegError, ValueError):
    pass


class SubsetViolation(ProxRegError, ValueError):
    pass


class ConditionFailed(ProxRegError):
    def __init__(self, message, witness=None, margin=None):
        super().__init__(message)
        self.witness = witness
        self.margin = margin


class NotPD(ProxRegError, ValueError):
    pass


class RadiusViolation(ProxRegError, ValueError):
    pass


class HypothesisViolation(ProxRegError):
    def __init__(self, condition, message):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class ParseError(ProxRegError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ProxRegError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
