"""Exception hierarchy shared by the solver modules."""


class LedbpError(Exception):
    """Base class for all errors raised by this package."""


class InfeasibleScene(LedbpError):
    """Some illuminance requirement cannot be met even with every LED at full power."""


class BoundaryPoint(LedbpError):
    """A point handed to the barrier is not strictly inside its box."""


class FeasibilityViolation(LedbpError):
    """Feasible-start Newton was asked to work at a point with A x != b."""


class NoInteriorPoint(LedbpError):
    """The feasible-start recipe could not produce a strictly interior point."""


class StepCollapse(LedbpError):
    """Backtracking line search shrank the step below its floor."""


class SolverFailure(LedbpError):
    """A linear-system backend failed inside the barrier loop.

    ``t`` and ``nu`` locate the failure in the outer loop.
    """

    def __init__(self, message, t=None, nu=None):
        super().__init__(message)
        self.t = t
        self.nu = nu

    def __str__(self):
        base = super().__str__()
        if self.t is None:
            return base
        return f"{base} (t={self.t:g}, nu={self.nu})"


class SingularSystem(LedbpError):
    pass


class RankDeficient(LedbpError):
    pass


class Infeasible(LedbpError):
    pass


class TooLarge(LedbpError):
    pass


class UnsupportedMethod(LedbpError):
    pass


class NumericalOverflow(LedbpError):
    """Gaussian BP means blew past the overflow guard; treated as divergence."""

    def __init__(self, message, tau=None):
        super().__init__(message)
        self.tau = tau


class VarianceNonconvergence(LedbpError):
    pass


class PowerIterationStall(LedbpError):
    pass


class EmptySample(LedbpError):
    pass


class ConfigError(LedbpError):
    pass
