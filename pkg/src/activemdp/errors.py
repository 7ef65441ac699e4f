"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`ActiveMdpError`, so callers (and the CLI) can tell domain failures
apart from programming errors.
"""


class ActiveMdpError(Exception):
    """Base class for domain errors."""


class InvalidModel(ActiveMdpError, ValueError):
    """An MDP, policy or distribution violates its structural invariants."""


class NotIrreducible(ActiveMdpError):
    """The chain has more than one recurrent class."""


class ZeroStationaryMass(ActiveMdpError):
    """A spectral quantity needs eta(s) > 0 for every state."""


class InvalidBranching(ActiveMdpError, ValueError):
    pass


class ReversibilityNotAchieved(ActiveMdpError):
    pass


class DegenerateCount(ActiveMdpError):
    """A confidence width was requested for a state with no samples."""


class ZeroCount(DegenerateCount):
    pass


class NonPositiveOptimum(ActiveMdpError, ValueError):
    pass


class GapTooSmall(ActiveMdpError):
    pass


class BudgetTooSmall(ActiveMdpError, ValueError):
    pass


class ZeroMarginal(ActiveMdpError):
    """A state marginal of a state-action distribution is zero."""


class Infeasible(ActiveMdpError):
    """The floor-restricted polytope (or an FMH constraint set) is empty."""


class NormAtOne(ActiveMdpError):
    """The spectral-norm surrogate reached 1, where the mixing penalty is undefined."""


class DegenerateVariances(ActiveMdpError, ValueError):
    pass


class MaxItersWarning(RuntimeWarning):
    """An iterative solver stopped on its iteration cap; the best iterate is returned."""
