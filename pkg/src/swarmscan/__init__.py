"""swarmscan: deterministic multi-drone coverage simulation with
reconstruction-change feedback.

The package closes the loop between coordinated viewpoint sampling (a
QP-based coverage controller with safety barriers) and an evolving synthetic
3-D reconstruction whose mesh changes re-prioritize under-observed regions.
"""

from .geometry import (
    DroneState,
    ObservationPoint,
    Region,
    VirtualField,
    discretize_virtual_field,
)
from .importance import ImportanceField
from .scenario import Scenario, parse_scenario
from .sensing import SensingParams
from .sim import MissionLog, run_mission

__version__ = "0.1.0"

__all__ = [
    "DroneState",
    "ImportanceField",
    "MissionLog",
    "ObservationPoint",
    "Region",
    "Scenario",
    "SensingParams",
    "VirtualField",
    "discretize_virtual_field",
    "parse_scenario",
    "run_mission",
    "__version__",
]
