"""Polygon-constrained nonparametric belief propagation for cooperative localization."""

from .config import ConfigError, RunConfig
from .geometry import ConvexPolygon, GeometryError, Halfspace, Point2, Rect
from .model import NodeId, NodeKind, RangeMeasurement, RangingModel, Scenario
from .nbp import BeliefState, KernelDensity, ParticleSet
from .poa import PoaState
from .sim import Summary, TrialResult

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "ConfigError",
    "ConvexPolygon",
    "GeometryError",
    "Halfspace",
    "KernelDensity",
    "NodeId",
    "NodeKind",
    "ParticleSet",
    "PoaState",
    "Point2",
    "RangeMeasurement",
    "RangingModel",
    "Rect",
    "RunConfig",
    "Scenario",
    "Summary",
    "TrialResult",
]
