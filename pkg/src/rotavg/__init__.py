"""Globally optimal rotation averaging on camera graphs.

Recovers absolute 3D rotations from noisy relative-rotation measurements
by solving the semidefinite relaxation of least-squares chordal rotation
averaging with coordinate descent: a dense block solver (BCD), a
rotation-only solver with linear per-iteration cost (RCD), and RCD
interleaved with a monotone local refinement (RCDL).
"""

from .errors import (
    DegenerateInputError,
    DisconnectedGraphError,
    IndefiniteInputError,
    InfeasibleDensityError,
    InvalidGraphError,
    IsolatedVertexError,
    MalformedLineError,
    NonUnitQuaternionError,
    NotARotationError,
    NotRankThreeError,
    NotSymmetricError,
    RotavgError,
    ZeroQuaternionError,
)
from .graph import (
    BlockColumn,
    CameraGraph,
    MeasurementMatrix,
    alpha_max,
    build_measurement_matrix,
    check_connected,
    fiedler_value,
    graph_density,
    identity_stack,
    random_stack,
    spanning_tree_init,
)
from .local import LocalConfig, local_refine, rcdl_solve
from .solver import (
    OpCounter,
    SolveConfig,
    SolveReport,
    align_gauge,
    bcd_solve,
    bcd_step,
    chordal_cost,
    error_stats,
    extract_rotations,
    objective,
    rcd_solve,
    rcd_step,
    relative_objective_error,
    sdp_from_stack,
    sdp_objective,
)
from .synth import SynthInstance, SynthSpec, generate, perturb_rotation

__version__ = "0.1.0"

__all__ = [
    "BlockColumn",
    "CameraGraph",
    "DegenerateInputError",
    "DisconnectedGraphError",
    "IndefiniteInputError",
    "InfeasibleDensityError",
    "InvalidGraphError",
    "IsolatedVertexError",
    "LocalConfig",
    "MalformedLineError",
    "MeasurementMatrix",
    "NonUnitQuaternionError",
    "NotARotationError",
    "NotRankThreeError",
    "NotSymmetricError",
    "OpCounter",
    "RotavgError",
    "SolveConfig",
    "SolveReport",
    "SynthInstance",
    "SynthSpec",
    "ZeroQuaternionError",
    "align_gauge",
    "alpha_max",
    "bcd_solve",
    "bcd_step",
    "build_measurement_matrix",
    "chordal_cost",
    "check_connected",
    "error_stats",
    "extract_rotations",
    "fiedler_value",
    "generate",
    "graph_density",
    "identity_stack",
    "local_refine",
    "objective",
    "perturb_rotation",
    "random_stack",
    "rcd_solve",
    "rcd_step",
    "rcdl_solve",
    "relative_objective_error",
    "sdp_from_stack",
    "sdp_objective",
    "spanning_tree_init",
]
