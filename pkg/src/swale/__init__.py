"""swale: a moving-mesh shallow water solver.

Space-time coupled ALE gas-kinetic scheme on unstructured triangular meshes
with compact fourth-order WENO reconstruction, exact geometric-conservation-law
handling, and well-balanced bottom topography coupling.
"""

from swale.ale import PositivityError, Simulation, SolverError
from swale.cases import CaseDefinition, get_case, stoker_dam_break
from swale.config import RunConfig, load_config
from swale.geometry import TriMesh, build_uniform_tri_mesh, swept_area
from swale.motion import MotionSpec

__version__ = "0.1.0"

__all__ = [
    "CaseDefinition",
    "MotionSpec",
    "PositivityError",
    "RunConfig",
    "Simulation",
    "SolverError",
    "TriMesh",
    "build_uniform_tri_mesh",
    "get_case",
    "load_config",
    "stoker_dam_break",
    "swept_area",
    "__version__",
]
