"""Exception hierarchy shared by all lelab modules."""


class LelabError(Exception):
    """Base class for all errors raised by lelab."""


class ConfigError(LelabError):
    """Invalid or malformed run configuration."""


class NotStarShaped(LelabError):
    """Domain is not strictly star-shaped about the origin."""


class MeshFailure(LelabError):
    """Mesh generation could not reach the quality targets."""


class DegenerateTriangle(LelabError):
    """A triangle with (relatively) vanishing area was encountered."""


class DimensionMismatch(LelabError):
    """Operands live on different meshes or have inconsistent sizes."""


class NotSPD(LelabError):
    """Matrix is not symmetric positive definite where it should be."""


class NotConverged(LelabError):
    """An iterative process exceeded its iteration budget."""


class NoBracket(LelabError):
    """Shooting parameter search failed to bracket the target radius."""


class LineSearchFailure(LelabError):
    """No admissible decrease step found in the search interval."""


class CollapsedToZero(LelabError):
    """Newton iteration fell into the basin of the trivial solution."""


class OverflowInNonlinearity(LelabError):
    """A nodal power exceeded the representable range (runaway iterate)."""


class PoleTooCloseToBoundary(LelabError):
    """Green representation pole has insufficient boundary clearance."""


class InsufficientResolution(LelabError):
    """Too few mesh nodes inside the rescaled sampling region."""


class SweepEmpty(LelabError):
    """Every exponent in a continuation sweep failed."""
