"""Fixed-wing UAV guidance stack.

Library layers, bottom to top:

- :mod:`fwnmpc.model` -- control-augmented flight dynamics and integrator
- :mod:`fwnmpc.paths` -- 3D Dubins path primitives and segment switching
- :mod:`fwnmpc.guidance` -- look-ahead lateral/longitudinal guidance errors
- :mod:`fwnmpc.nmpc` -- multiple-shooting NMPC with an active-set QP core
- :mod:`fwnmpc.sysid` -- grey-box output-error parameter identification
- :mod:`fwnmpc.sim` -- deterministic closed-loop scenario harness
"""

from fwnmpc.model import (
    AircraftState,
    ClosedLoopParams,
    ControlInput,
    ModelParams,
    OpenLoopParams,
    PhysicalConstants,
    WindVector,
    default_params,
    rk4_step,
    solve_trim,
)
from fwnmpc.paths import ArcSegment, LineSegment, LoiterSegment, PathQueue, SwitchConfig
from fwnmpc.guidance import GuidanceConfig, GuidanceErrors

__all__ = [
    "AircraftState",
    "ClosedLoopParams",
    "ControlInput",
    "ModelParams",
    "OpenLoopParams",
    "PhysicalConstants",
    "WindVector",
    "default_params",
    "rk4_step",
    "solve_trim",
    "ArcSegment",
    "LineSegment",
    "LoiterSegment",
    "PathQueue",
    "SwitchConfig",
    "GuidanceConfig",
    "GuidanceErrors",
]

__version__ = "0.1.0"
