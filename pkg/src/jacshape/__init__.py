"""jacshape: diffeomorphisms with a prescribed Jacobian determinant and
boundary-collar support control on 1D/2D grid domains."""

from . import errors
from .domains import CollarSpec, Domain, build_domain, collar, exhaust, inradius
from .fields import (
    HolderEstimate,
    ScalarField,
    VectorField,
    constant_field,
    divergence,
    gradient,
    holder_norm,
    holder_seminorm,
    integrate,
    jacobian_det,
    mollify,
    rotated_gradient,
    sample_field,
    scalar_field,
    vector_field,
    zero_vector_field,
)
from .divsolve import (
    NeumannSolution,
    StreamPrimitive,
    extend_primitive,
    solve_div_basic,
    solve_div_collar,
    solve_neumann,
    stream_primitive,
)
from .transport import (
    FlowConfig,
    GridMap,
    compose,
    eval_map,
    identity_map,
    interpolate_scalar,
    invert,
    moser_solve,
    moser_velocity,
)
from .report import SolveReport
from .solvers import (
    FixedPointConfig,
    MeasureCorrection,
    fixedpoint_solve,
    identity_region,
    measure_correct,
    q_residual,
    solve,
    solve_1d,
    solve_general,
    solve_supported,
    support_depth,
    volume_correct,
)

__version__ = "0.1.0"


def __getattr__(name):
    # estimator pulls in scikit-learn; keep base imports light
    if name in ("PrescribedJacobianMap", "VolumeCorrector"):
        from . import estimator

        return getattr(estimator, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
