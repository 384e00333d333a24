"""Exception types shared across the package."""


class RwreError(Exception):
    """Base class for errors raised by this package."""


class EnvSpecError(RwreError, ValueError):
    """The environment law is malformed, recurrent, or has no tail exponent in (0, 2)."""


class DivergentMomentError(RwreError, ValueError):
    """A requested moment of rho is infinite under the given law."""


class InsufficientWindowError(RwreError, RuntimeError):
    """A left-tail sum did not converge inside the available window.

    Raised by quenched formulas in ``left_tail="strict"`` mode when the
    contribution of the leftmost site is still non-negligible relative to
    the accumulated sum.
    """

    def __init__(self, message, rel_remainder=None):
        super().__init__(message)
        self.rel_remainder = rel_remainder


class WindowExitError(RwreError, RuntimeError):
    """A simulated walk stepped outside the environment window."""

    def __init__(self, message, position=None, step=None):
        super().__init__(message)
        self.position = position
        self.step = step


class BudgetExhaustedError(RwreError, RuntimeError):
    """Rejection sampling exceeded its draw budget.

    Carries the number of candidate draws consumed and how many were
    accepted, so callers can report the observed acceptance rate.
    """

    def __init__(self, message, draws=0, accepted=0):
        super().__init__(message)
        self.draws = draws
        self.accepted = accepted


class RunawayExcursionError(RwreError, RuntimeError):
    """A single excursion exceeded the allowed maximum length."""


class EstimationError(RwreError, RuntimeError):
    """A statistical estimate could not be formed (too few points, degenerate fit)."""


class CensoringError(RwreError, RuntimeError):
    """Too many simulated walks hit their step horizon for the result to be trusted.

    Carries the number of censored replicas and the total, so the caller can
    report the breach rate alongside the configured ceiling.
    """

    def __init__(self, message, censored=0, total=0):
        super().__init__(message)
        self.censored = censored
        self.total = total
