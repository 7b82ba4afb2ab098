"""Hele-Shaw free-boundary evolution through a one-parameter family of obstacle problems."""

from .errors import (
    BallTooSmall,
    DepthTooShallow,
    DimensionUnsupported,
    GeometryError,
    GridMismatch,
    HeleShawError,
    NoFeasibleActiveSet,
    NotAGraph,
    NotConnected,
    NotConverged,
    NonFiniteValue,
    SolverError,
    StripViolation,
    TooLarge,
)
from .geometry import GridSpec, IndicatorField, Scenario, load_scenario, rasterize_scenario
from .obstacle import ObstacleProblem, ScalarField, SolverConfig, assemble, psor_solve
from .semiflow import DomainMask, GraphFunction, SemiflowRun, evolve, extract_graph

__version__ = "0.1.0"

__all__ = [
    "BallTooSmall", "DepthTooShallow", "DimensionUnsupported", "DomainMask", "GeometryError",
    "GraphFunction", "GridMismatch", "GridSpec", "HeleShawError", "IndicatorField",
    "NoFeasibleActiveSet", "NonFiniteValue", "NotAGraph", "NotConnected", "NotConverged",
    "ObstacleProblem", "ScalarField", "Scenario", "SemiflowRun", "SolverConfig", "SolverError",
    "StripViolation", "TooLarge", "assemble", "evolve", "extract_graph", "load_scenario",
    "psor_solve", "rasterize_scenario",
]
