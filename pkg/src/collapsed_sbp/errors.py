"""Exception hierarchy shared by all modules."""


class CollapsedSBPError(Exception):
    """Base class for all package errors."""

    category = "error"


class QuadratureError(CollapsedSBPError):
    category = "quadrature"


class ConfigurationError(CollapsedSBPError):
    category = "configuration"


class DomainError(CollapsedSBPError, ValueError):
    """Point lies at a singularity of the collapsed coordinate map."""

    category = "domain"


class GeometryError(CollapsedSBPError):
    category = "geometry"


class MeshError(CollapsedSBPError):
    category = "mesh"


class TopologyError(MeshError):
    category = "topology"


class OrientationError(MeshError):
    category = "orientation"


class DivergenceError(CollapsedSBPError):
    category = "divergence"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SizeGuardError(CollapsedSBPError):
    category = "size-guard"
