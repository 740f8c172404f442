"""Simulation and metrics toolkit for shape self-assembly in swarms of
disc-shaped robots."""

from .controller import ControllerConfig, ControllerState, Robot, controller_tick, join_rule
from .errors import (
    ConfigError,
    ControllerError,
    PlacementOverflow,
    ShapeError,
    SwarmAssemblyError,
    TickNotSampled,
)
from .harness import RunResult, ScenarioConfig, load_config, parse_config, place_aggregate, place_random, render, run
from .metrics import MetricsReport, compute_report, motility_index, periphery_violations
from .protocol import Message, Phase
from .shape import GridShape, capacity, count_holes, hex_sites, load_shape, load_shape_file
from .trace import Trace
from .world import MotionCommand, Pose, WorldConfig, WorldState, step

__version__ = "0.1.0"
