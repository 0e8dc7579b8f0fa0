"""Multiple-shooting NMPC: path following, airspeed stabilization, soft
angle-of-attack constraint, box-constrained controls."""

from fwnmpc.nmpc.ocp import (
    OcpConfig,
    References,
    Weights,
    alpha_soft,
    default_weights,
    propagate_horizon,
    rk4_jacobians,
)
from fwnmpc.nmpc.qp import solve_box_qp
from fwnmpc.nmpc.solver import (
    AircraftShootingProblem,
    NmpcController,
    OcpSolution,
    apply_throttle_failure_weight,
    sqp_iterate,
)

__all__ = [
    "OcpConfig",
    "References",
    "Weights",
    "alpha_soft",
    "default_weights",
    "propagate_horizon",
    "rk4_jacobians",
    "solve_box_qp",
    "AircraftShootingProblem",
    "NmpcController",
    "OcpSolution",
    "apply_throttle_failure_weight",
    "sqp_iterate",
]
