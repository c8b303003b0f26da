"""Exception hierarchy shared by all slowclt modules."""


class SlowCltError(Exception):
    """Base class for all library errors."""


# tower_dynamics
class MassSumError(SlowCltError):
    """Tower masses do not sum to 1 within tolerance."""


class PeriodicityError(SlowCltError):
    """Aperiodicity was required but gcd of tower heights exceeds 1."""


class InvalidState(SlowCltError):
    """A tower state lies outside the system's state space."""


class WindowTooLarge(SlowCltError):
    """Exact occupancy DP would exceed the configured operation budget."""


# construction
class ScheduleInfeasible(SlowCltError):
    """No admissible probe times found within the search bound."""


class BadConstants(SlowCltError):
    """Density-variant constants violate L2 >= 10*L1."""


class VariantMismatch(SlowCltError):
    """Operation applied to a model of the wrong variant."""


class DegenerateModel(SlowCltError):
    """The inactive set has measure 0 or 1, degenerating the process."""


# dist_engine
class BudgetExceeded(SlowCltError):
    """Both the grid and Monte Carlo paths are unavailable."""


# diagnostics
class EvenIndex(SlowCltError):
    """Density-variant ratio probe requested at an even index."""


class LatticeMismatch(SlowCltError):
    """Step law is not supported on the declared lattice, or is degenerate."""


# cli_reporting
class ConfigError(SlowCltError):
    """Experiment configuration violates the schema."""


class ParseError(SlowCltError):
    """Report bundle cannot be parsed."""


class BoundMismatch(SlowCltError):
    """A probe's recorded bound disagrees with recomputation."""
