"""Time-independent 3D path primitives and segment switching.

Three segment kinds cover typical fixed-wing missions: straight lines,
constant-radius arcs extended into helices by an elevation angle, and
unlimited loiter circles. Everything is defined spatially; no segment is
parameterized by time, so tracking is invariant to ground speed.

Arc direction convention: positive signed radius means clockwise when viewed
from above (heading increasing), negative means counter-clockwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from fwnmpc.model import TWO_PI

# Degenerate-geometry guard: queries closer than this to a helix axis have no
# well-defined lateral projection.
AXIS_EPS = 0.1  # m

# Helix pitch below this is treated as a flat circle.
FLAT_SLOPE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class LineSegment:
    """Straight 3D segment through terminal point `b` with exit course/elevation."""

    b: np.ndarray          # terminal point, NED (m)
    chi_p: float           # exit course (rad)
    gamma_p: float         # elevation angle (rad), |gamma_p| < pi/2

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        _check_elevation(self.gamma_p)


@dataclass(frozen=True, eq=False)
class ArcSegment:
    """Constant-radius arc/helix about center `c` placed at the terminal altitude."""

    c: np.ndarray          # center at terminal altitude, NED (m)
    r_signed: float        # radius (m); sign sets direction (+ clockwise)
    chi_p: float           # exit course (rad)
    gamma_p: float         # elevation angle (rad), |gamma_p| < pi/2

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if self.r_signed == 0.0:
            raise ValueError("arc radius must be nonzero")
        _check_elevation(self.gamma_p)


@dataclass(frozen=True, eq=False)
class LoiterSegment:
    """Unlimited loiter circle; never terminates."""

    c: np.ndarray          # center, NED (m)
    r_signed: float        # radius (m); sign sets direction (+ clockwise)

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if self.r_signed == 0.0:
            raise ValueError("loiter radius must be nonzero")


PathSegment = Union[LineSegment, ArcSegment, LoiterSegment]


def _check_elevation(gamma_p: float) -> None:
    if not abs(gamma_p) < np.pi / 2:
        raise ValueError("segment elevation angle must satisfy |gamma_p| < pi/2")


@dataclass(frozen=True)
class ClosestPoint:
    """Closest point on a segment plus the unit path tangent there.

    For arc segments `delta_chi` is the angular distance from the exit point
    measured against the travel direction, and `leg` counts whole helix turns
    between the chosen leg and the terminal one.
    """

    p: np.ndarray
    t_hat: np.ndarray
    valid: bool = True
    delta_chi: float = 0.0
    leg: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "t_hat", np.asarray(self.t_hat, dtype=float))


@dataclass(frozen=True)
class SwitchConfig:
    """Terminal acceptance parameters and switch-state dynamics.

    The growth rate is arbitrary as long as it is fast enough that the
    reference hand-off completes promptly after the terminal conditions are
    met; 5/s crosses a segment boundary within 0.2 s.
    """

    r_acpt: float = 30.0                     # acceptance radius (m)
    eta_acpt: float = np.radians(15.0)       # acceptance bearing angle (rad)
    rho_sw: float = 5.0                      # switch-state growth rate (1/s)
    sw_threshold: float = 0.5                # latch threshold within a segment

    def __post_init__(self):
        if self.r_acpt <= 0.0:
            raise ValueError("acceptance radius must be > 0")
        if not (0.0 < self.eta_acpt < np.pi / 2):
            raise ValueError("acceptance bearing angle must lie in (0, pi/2)")


@dataclass(frozen=True)
class SwitchingConditions:
    proximity: bool
    bearing: bool
    travel: bool


@dataclass(frozen=True)
class PathQueue:
    """Ordered segment queue with a continuous switching state.

    Segment i is active while x_sw is in [i, i+1); crossing i+1 advances the
    index. The index never decreases and the queue holds its last segment
    once exhausted.
    """

    segments: tuple
    x_sw: float = 0.0
    current_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("path queue needs at least one segment")
        if not 0 <= self.current_index < len(self.segments):
            raise ValueError("current_index out of range")
        if self.x_sw < 0.0:
            raise ValueError("switching state must be non-negative")

    @property
    def current_segment(self) -> PathSegment:
        return self.segments[self.current_index]


def tangent_from_course(chi: float, gamma_p: float) -> np.ndarray:
    """Unit tangent for a course angle and elevation angle (NED)."""
    cg = np.cos(gamma_p)
    return np.array([cg * np.cos(chi), cg * np.sin(chi), -np.sin(gamma_p)])


def arc_direction(seg) -> float:
    """+1 for clockwise (viewed from above), -1 for counter-clockwise."""
    return 1.0 if seg.r_signed > 0.0 else -1.0


def closest_point_line(seg: LineSegment, r) -> ClosestPoint:
    """Orthogonal projection onto the infinite line through `b`."""
    r = np.asarray(r, dtype=float)
    t_hat = tangent_from_course(seg.chi_p, seg.gamma_p)
    p = seg.b + np.dot(r - seg.b, t_hat) * t_hat
    return ClosestPoint(p=p, t_hat=t_hat)


def closest_point_arc(seg, r, leg_cap: int | None = None) -> ClosestPoint:
    """Decoupled closest point on an arc, helix, or loiter circle.

    Lateral part: radial projection onto the circle. Vertical part (helix):
    altitude of the nearest leg, found from the backward angular distance to
    the exit point plus a rounded whole number of turns. `leg_cap` limits the
    chosen leg index from above, which refuses legs already passed when
    tracking progress along the helix.
    """
    r = np.asarray(r, dtype=float)
    radius = abs(seg.r_signed)
    direction = arc_direction(seg)

    rho_vec = r[:2] - seg.c[:2]
    rho = float(np.hypot(rho_vec[0], rho_vec[1]))
    if rho < AXIS_EPS:
        return ClosestPoint(p=seg.c.copy(), t_hat=np.array([1.0, 0.0, 0.0]), valid=False)

    lam = float(np.arctan2(rho_vec[1], rho_vec[0]))
    p_ne = seg.c[:2] + radius * rho_vec / rho
    course = lam + direction * np.pi / 2

    is_loiter = isinstance(seg, LoiterSegment)
    if is_loiter:
        gamma_p = 0.0
    else:
        gamma_p = seg.gamma_p
    slope = np.tan(gamma_p)

    if is_loiter or abs(slope) < FLAT_SLOPE_EPS:
        p_d = float(seg.c[2])
        delta_chi = 0.0 if is_loiter else _backward_angle(seg, lam, direction)
        leg = 0
    else:
        delta_chi = _backward_angle(seg, lam, direction)
        pitch = TWO_PI * radius * slope
        dd_chi = delta_chi * radius * slope
        leg = int(np.round((r[2] - (seg.c[2] + dd_chi)) / pitch))
        if leg_cap is not None:
            leg = min(leg, leg_cap)
        p_d = float(seg.c[2] + dd_chi + leg * pitch)

    t_hat = tangent_from_course(course, gamma_p)
    return ClosestPoint(p=np.array([p_ne[0], p_ne[1], p_d]), t_hat=t_hat,
                        delta_chi=delta_chi, leg=leg)


def _backward_angle(seg, lam: float, direction: float) -> float:
    """Angular distance from the exit point, measured against travel, in [0, 2pi)."""
    lam_b = seg.chi_p - direction * np.pi / 2
    return float(np.mod(direction * (lam_b - lam), TWO_PI))


def closest_point(seg: PathSegment, r, leg_cap: int | None = None) -> ClosestPoint:
    """Dispatch to the line or arc closest-point computation."""
    if isinstance(seg, LineSegment):
        return closest_point_line(seg, r)
    return closest_point_arc(seg, r, leg_cap=leg_cap)


def path_tangent_2d(cp: ClosestPoint) -> np.ndarray:
    """Horizontal tangent components normalized to unit length."""
    t_ne = cp.t_hat[:2]
    norm = float(np.hypot(t_ne[0], t_ne[1]))
    if norm == 0.0:
        raise ValueError("path tangent has no horizontal component")
    return t_ne / norm


def terminal_point(seg) -> np.ndarray:
    """Terminal point of a line or arc; loiter circles have none."""
    if isinstance(seg, LineSegment):
        return seg.b.copy()
    if isinstance(seg, ArcSegment):
        direction = arc_direction(seg)
        lam_b = seg.chi_p - direction * np.pi / 2
        radius = abs(seg.r_signed)
        return np.array([seg.c[0] + radius * np.cos(lam_b),
                         seg.c[1] + radius * np.sin(lam_b),
                         seg.c[2]])
    raise TypeError("loiter segments do not terminate")


def terminal_tangent(seg) -> np.ndarray:
    """Unit path tangent at the terminal point."""
    if isinstance(seg, LoiterSegment):
        raise TypeError("loiter segments do not terminate")
    return tangent_from_course(seg.chi_p, seg.gamma_p)


def switching_conditions(seg: PathSegment, r, v_g, cfg: SwitchConfig) -> SwitchingConditions:
    """Evaluate the proximity/bearing/travel terminal conditions.

    The bearing test uses the normalized ground velocity; zero ground speed
    fails it. Loiter segments satisfy nothing by definition.
    """
    if isinstance(seg, LoiterSegment):
        return SwitchingConditions(False, False, False)
    r = np.asarray(r, dtype=float)
    v_g = np.asarray(v_g, dtype=float)
    b = terminal_point(seg)
    t_b = terminal_tangent(seg)

    to_aircraft = r - b
    proximity = bool(np.linalg.norm(to_aircraft) < cfg.r_acpt)

    speed = float(np.linalg.norm(v_g))
    if speed > 0.0:
        bearing = bool(np.dot(v_g / speed, t_b) > np.cos(cfg.eta_acpt))
    else:
        bearing = False

    travel = bool(np.dot(to_aircraft, t_b) > 0.0)
    return SwitchingConditions(proximity, bearing, travel)


def terminal_conditions_met(seg: PathSegment, conds: SwitchingConditions) -> bool:
    """Combine the conditions per segment kind: lines use travel only."""
    if isinstance(seg, LoiterSegment):
        return False
    if isinstance(seg, LineSegment):
        return conds.travel
    return conds.proximity and conds.bearing and conds.travel


def advance_switch_state(queue: PathQueue, conds: SwitchingConditions,
                         cfg: SwitchConfig, dt: float) -> PathQueue:
    """Advance the switching state by one Euler step and update the index.

    The state grows while the terminal conditions hold or once it has latched
    past the threshold within the current segment; it stops at the end of the
    queue.
    """
    frac = queue.x_sw - queue.current_index
    gate = terminal_conditions_met(queue.current_segment, conds) or frac > cfg.sw_threshold
    x_new = queue.x_sw + (cfg.rho_sw * dt if gate else 0.0)
    x_new = min(x_new, float(len(queue.segments)))
    idx_new = min(int(np.floor(x_new)), len(queue.segments) - 1)
    idx_new = max(idx_new, queue.current_index)
    return replace(queue, x_sw=x_new, current_index=idx_new)
