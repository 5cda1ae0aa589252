"""Exception hierarchy shared by all spillback modules."""


class SpillbackError(Exception):
    """Base class for every error raised by this package."""


class TopologyError(SpillbackError, ValueError):
    pass


class CycleDetected(TopologyError):
    pass


class MultipleOrigins(TopologyError):
    pass


class MultipleDestinations(TopologyError):
    pass


class UnreachableNode(TopologyError):
    pass


class DanglingLink(TopologyError):
    pass


class LabelingError(TopologyError):
    """Raised when a link does not satisfy tail < head."""


class DensityOutOfRange(SpillbackError, ValueError):
    pass


class UnknownNode(SpillbackError, KeyError):
    pass


class RoutingError(SpillbackError, ValueError):
    pass


class EmptyOrFullSubset(RoutingError):
    pass


class FlowNotBalanced(SpillbackError, ValueError):
    pass


class FlowAtCapacity(SpillbackError, ValueError):
    pass


class FlowExceedsCapacity(SpillbackError, ValueError):
    pass


class StepSizeUnderflow(SpillbackError, RuntimeError):
    pass


class HorizonNonpositive(SpillbackError, ValueError):
    pass


class WindowExceedsHorizon(SpillbackError, ValueError):
    pass


class NoEquilibrium(SpillbackError, RuntimeError):
    pass


class NonConvergence(SpillbackError, RuntimeError):
    pass


class InfeasibleBudget(SpillbackError, ValueError):
    pass


class NotTreeLike(SpillbackError, ValueError):
    pass


class BoundViolation(SpillbackError, AssertionError):
    """Internal-consistency failure: the resilience sandwich did not hold."""


class ScaleOutOfRange(SpillbackError, ValueError):
    pass


class NotAdmissible(SpillbackError, ValueError):
    pass


class BudgetExceeded(SpillbackError, RuntimeError):
    pass


class SpecParseError(SpillbackError, ValueError):
    pass
