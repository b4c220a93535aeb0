"""Charts and atlases for solution manifolds of state-dependent delay systems.

The package discretizes the space of C1 history segments on [-r, 0],
represents systems x'(t) = g(x(t - d_1(L x_t)), ..., x(t - d_k(L x_t))), and
realizes a finite atlas of charts over the set of segments satisfying the
compatibility condition phi'(0) = f(phi): a linear projection chart where all
delays vanish and frame-based charts elsewhere, each with a fixed-point
inverse and a straightening diffeomorphism.  A method-of-steps integrator
advances solutions while monitoring that they stay on the manifold, and a
verification harness checks every construction at desk scale.
"""

from ._version import __version__
from .atlas import Atlas, build_atlas, classify, lift_to_manifold
from .bumps import Bump, BumpRequest, make_bump, make_component_bump, make_vector_bump
from .chart_j import ChartJ, FrameJ, build_frame_j, min_positive_delay
from .chart_k import ChartK, FrameK, build_frame_k
from .errors import (
    BumpInfeasibleError,
    DomainError,
    GridMismatchError,
    ModelValidationError,
    NoChartForStratumError,
    NoConvergenceError,
    OutsideDomainError,
)
from .harness import SuiteConfig, VerificationReport, run_suite
from .model import (
    DelayFn,
    DelaySet,
    Domain,
    Hypothesis,
    LinearMapL,
    Model,
    RhsG,
)
from .registry import BUILTIN_IDS, get_model, load_model_spec
from .segments import Grid, MatSegmentC1, SegmentC0, SegmentC1, scalar_times_basis
from .semiflow import Trajectory, integrate
from .solvers import SolverSettings

__all__ = [
    "__version__",
    "Atlas",
    "build_atlas",
    "classify",
    "lift_to_manifold",
    "Bump",
    "BumpRequest",
    "make_bump",
    "make_component_bump",
    "make_vector_bump",
    "ChartJ",
    "FrameJ",
    "build_frame_j",
    "min_positive_delay",
    "ChartK",
    "FrameK",
    "build_frame_k",
    "BumpInfeasibleError",
    "DomainError",
    "GridMismatchError",
    "ModelValidationError",
    "NoChartForStratumError",
    "NoConvergenceError",
    "OutsideDomainError",
    "SuiteConfig",
    "VerificationReport",
    "run_suite",
    "DelayFn",
    "DelaySet",
    "Domain",
    "Hypothesis",
    "LinearMapL",
    "Model",
    "RhsG",
    "BUILTIN_IDS",
    "get_model",
    "load_model_spec",
    "Grid",
    "MatSegmentC1",
    "SegmentC0",
    "SegmentC1",
    "scalar_times_basis",
    "Trajectory",
    "integrate",
    "SolverSettings",
]
