"""Tensor-product SBP operators on triangles and tetrahedra in collapsed coordinates,
with an energy-stable split-form solver for linear advection on curved meshes."""

from .errors import (
    CollapsedSBPError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    GeometryError,
    MeshError,
    OrientationError,
    QuadratureError,
    SizeGuardError,
    TopologyError,
)
from .harness import ExperimentConfig, RunRecord, residual_trace, run_convergence, spectral_radius
from .jacobi import JacobiWeight, QuadratureRule1D, RuleKind, gauss_rule
from .mesh import Mesh, build_connectivity, generate_mesh
from .physop import Algorithm, build_physical_operators, compute_geometry
from .pkd import build_modal_basis, pkd_eval, vandermonde
from .refelem import (
    ElementShape,
    OperatorConfig,
    SBPOperatorSet,
    build_operators,
    default_config,
    verify_sbp,
)
from .solver import Discretization, FluxConfig, Formulation, integrate, set_initial_condition

__version__ = "0.1.0"
