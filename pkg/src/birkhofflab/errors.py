"""Exception types shared across the package."""


class ModelInvalidError(ValueError):
    """A metric model violates its admissibility conditions (e.g. K <= 0)."""


class ChartDomainError(ValueError):
    """A chart coordinate lies outside its admissible range."""


class IntegrationFailure(RuntimeError):
    """Adaptive step size underflowed.  Carries the last good state."""

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state


class NoConvergenceError(RuntimeError):
    """An iterative refinement (Newton/shooting) failed to converge."""


class SectionInvalidError(ValueError):
    """The base curve cannot carry a transversal annulus (e.g. not simple)."""


class ReturnFailure(RuntimeError):
    """A return event was not found within the search horizon."""


class PinchingViolationError(RuntimeError):
    """Geometric hypotheses behind the lift construction fail numerically
    (e.g. a return arc self-intersects)."""


class NonIntegrableFormError(ValueError):
    """A discrete one-form failed its closure test; the input map does not
    preserve the reference area form."""


class NotGeneratingError(ValueError):
    """A candidate generating function does not define a map on the strip."""


class PreconditionError(ValueError):
    """An operation was called outside its documented preconditions."""


class InternalConsistencyError(RuntimeError):
    """A postcondition that should hold for admissible inputs failed."""


class AuditRefused(RuntimeError):
    """The audit hypotheses are not met; no verdict is produced."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason
