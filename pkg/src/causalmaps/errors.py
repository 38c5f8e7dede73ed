"""Exception types shared across the package.

Names follow the operation contracts: each error below is raised by the
operations that document it, and nowhere else.
"""


class CausalMapsError(Exception):
    """Base class for all package errors."""


# offspring
class NonNormalized(CausalMapsError):
    """Input weights do not sum to 1 within tolerance."""


class NegativeWeight(CausalMapsError):
    """A probability weight is negative."""


class NotSupercritical(CausalMapsError):
    """Operation requires an offspring mean > 1."""


class DegenerateQ(CausalMapsError):
    """Extinction probability is 0, so no subcritical bush law exists."""


class OutOfDomain(CausalMapsError):
    """Argument outside the generating function's domain [0, 1]."""


# tree / map growth
class SizeLimit(CausalMapsError):
    """Vertex budget exceeded while growing a tree or map."""


class NoBackbone(CausalMapsError):
    """Tree has no vertex reaching the depth cap at some level."""


class Mu0Positive(CausalMapsError):
    """Half-plane construction requires an offspring law with no leaves."""


class UnknownVertex(CausalMapsError):
    """Vertex id not present in the map."""


# metric
class Disconnected(CausalMapsError):
    """Vertices lie in different components."""


class NotClosed(CausalMapsError):
    """Paths do not concatenate into a closed loop."""


class NotASlice(CausalMapsError):
    """Operation is only defined on slice maps."""


class TooShallow(CausalMapsError):
    """Slice is not deep enough for the requested table."""


class NoPlateau(CausalMapsError):
    """Corner-defect table has not stabilised; deepen the slice."""


# walk
class IsolatedVertex(CausalMapsError):
    """Vertex has no incident edges."""


class NoRegenerations(CausalMapsError):
    """No regeneration times were found in the trace."""


class InsufficientMaterialization(CausalMapsError):
    """Map is not materialised far enough for the requested scan."""


class TailNotAboveH(CausalMapsError):
    """Walk trace ends at or below the marker height."""


# explore
class NotYetReached(CausalMapsError):
    """The exploration has not performed that many walk steps yet."""


class NotKFree(CausalMapsError):
    """No k-free side could be certified for an exploration step."""


# electric
class DisconnectedTerminals(CausalMapsError):
    """Source and sink sets are not connected."""


class SolverFailure(CausalMapsError):
    """Linear solve did not reach the required residual."""


class TooLarge(CausalMapsError):
    """Network too large for exhaustive enumeration."""


class TerminalsNotOuter(CausalMapsError):
    """Dual construction requires both terminals on the outer face."""


class TooFewCutsets(CausalMapsError):
    """Not enough disjoint cutsets below the requested spine vertex."""


class TruncationDies(CausalMapsError):
    """Degree-truncated subtree dies before the cap; resample the base."""


# cli
class ConfigInvalid(CausalMapsError):
    """Experiment configuration failed validation."""


class IoError(CausalMapsError):
    """Output could not be written."""
