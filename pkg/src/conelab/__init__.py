"""conelab: numerics for harmonic functions on cone-like domains."""

from .errors import ConelabError, ConfigError, ConvergenceError, ResolutionError
from .geometry import (
    CsgDomain,
    EllipticCone3D,
    HalfSpace,
    PlacedCone,
    Sector2D,
    conical_rate,
    hausdorff_deviation,
)
from .meshing import SimplicialMesh, mesh_arc_interval, mesh_cap, mesh_sector, refine
from .volmesh import mesh_domain_ball

__version__ = "0.1.0"

__all__ = [
    "ConelabError",
    "ConfigError",
    "ConvergenceError",
    "ResolutionError",
    "CsgDomain",
    "EllipticCone3D",
    "HalfSpace",
    "PlacedCone",
    "Sector2D",
    "conical_rate",
    "hausdorff_deviation",
    "SimplicialMesh",
    "mesh_arc_interval",
    "mesh_cap",
    "mesh_sector",
    "refine",
    "mesh_domain_ball",
    "__version__",
]
