"""Look-ahead guidance errors for lateral-directional and longitudinal tracking.

The lateral error is the angle between the ground velocity and a look-ahead
vector blended from the path tangent and the direction back to the path. The
longitudinal error is a vertical-rate offset normalized by the climb/sink
envelope, which stays meaningful even at near-zero horizontal ground speed.

Formulas accept scalars or arrays and broadcast elementwise; only the
strictly scalar entry points raise on degenerate inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fwnmpc.model import wrap_angle
from fwnmpc.paths import ClosestPoint, LineSegment, path_tangent_2d


class ZeroGroundSpeedError(ValueError):
    """Lateral guidance is undefined at zero horizontal ground speed.

    Callers hold the previous error value when this is raised.
    """


@dataclass(frozen=True)
class GuidanceConfig:
    """Track-error-bound time constants and the vertical rate envelope.

    Climb and sink rates are stored as positive magnitudes; in the NED sign
    convention climbing means d_dot < 0.
    """

    t_b_lat: float = 1.0       # s
    t_b_lon: float = 1.0       # s
    d_dot_clmb: float = 3.5    # m/s, maximum climb rate (magnitude)
    d_dot_sink: float = 1.5    # m/s, maximum sink rate (magnitude)

    def __post_init__(self):
        for name in ("t_b_lat", "t_b_lon", "d_dot_clmb", "d_dot_sink"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"guidance parameter {name} must be > 0")


@dataclass(frozen=True)
class GuidanceErrors:
    """Scalar guidance errors plus the intermediate tracking quantities."""

    eta_lat: float         # rad, wrapped to (-pi, pi]
    eta_lon: float         # dimensionless vertical-rate error
    e_lat: float           # m, signed lateral track error
    e_lon: float           # m, signed vertical track error
    l_hat: np.ndarray      # unit look-ahead vector (horizontal)
    d_dot_sp: float        # m/s, vertical velocity setpoint


def lateral_track_error(t_bar, p, r):
    """Signed lateral track error from the horizontal unit tangent.

    Positive when the aircraft is left of the path looking along the tangent.
    """
    t_bar = np.asarray(t_bar, dtype=float)
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    return t_bar[0] * (p[1] - r[1]) - t_bar[1] * (p[0] - r[0])


def track_error_bound(speed, t_b):
    """Adaptive track-error boundary with a smooth floor below unit speed.

    Both branches agree in value and first derivative at speed 1.
    """
    speed = np.asarray(speed, dtype=float)
    bound = np.where(speed > 1.0, speed * t_b, 0.5 * t_b * (1.0 + speed ** 2))
    if bound.ndim == 0:
        return float(bound)
    return bound


def lookahead_mapping(e_prime):
    """Quadratic map from normalized track error to the tangent/error blend.

    Saturates the input to [0, 1]; returns 0 on the track and 1 at or beyond
    the track-error boundary.
    """
    e_prime = np.clip(np.asarray(e_prime, dtype=float), 0.0, 1.0)
    theta = -e_prime * (e_prime - 2.0)
    if theta.ndim == 0:
        return float(theta)
    return theta


def lateral_lookahead(t_bar, e_vec, theta_l) -> np.ndarray:
    """Blend the path tangent with the unit error direction, then normalize.

    The raw blend of two unit vectors is not unit length; since only the
    direction feeds the error angle, the result is renormalized. A vanishing
    blend (anti-parallel inputs at theta_l = 0.5) falls back to the tangent.
    """
    t_bar = np.asarray(t_bar, dtype=float)
    e_vec = np.asarray(e_vec, dtype=float)[:2]
    e_norm = float(np.hypot(e_vec[0], e_vec[1]))
    if theta_l == 0.0 or e_norm == 0.0:
        return t_bar.copy()
    e_bar = e_vec / e_norm
    l_vec = (1.0 - theta_l) * t_bar + theta_l * e_bar
    l_norm = float(np.hypot(l_vec[0], l_vec[1]))
    if l_norm < 1e-12:
        return t_bar.copy()
    return l_vec / l_norm


def eta_lat(l_hat, v_g_lat) -> float:
    """Error angle between the look-ahead vector and the ground velocity."""
    v_g_lat = np.asarray(v_g_lat, dtype=float)
    if np.hypot(v_g_lat[0], v_g_lat[1]) <= 0.0:
        raise ZeroGroundSpeedError("lateral guidance undefined at zero ground speed")
    l_hat = np.asarray(l_hat, dtype=float)
    return float(wrap_angle(np.arctan2(l_hat[1], l_hat[0])
                            - np.arctan2(v_g_lat[1], v_g_lat[0])))


def vertical_rate_terms(e_lon, v_g, t_pd, cfg: GuidanceConfig):
    """Array-friendly core of the longitudinal setpoint computation.

    Returns (d_dot_p, delta_d_dot, theta_l_lon, d_dot_sp).
    """
    e_lon = np.asarray(e_lon, dtype=float)
    v_g = np.asarray(v_g, dtype=float)
    speed = np.sqrt(np.sum(v_g ** 2, axis=0)) if v_g.ndim > 1 else float(np.linalg.norm(v_g))

    d_dot_p = np.clip(speed * t_pd, -cfg.d_dot_clmb, cfg.d_dot_sink)
    delta_d_dot = np.where(e_lon < 0.0,
                           -cfg.d_dot_clmb - d_dot_p,
                           cfg.d_dot_sink - d_dot_p)
    e_b_lon = track_error_bound(np.abs(delta_d_dot), cfg.t_b_lon)
    e_prime = np.clip(np.abs(e_lon / e_b_lon), 0.0, 1.0)
    theta_l_lon = lookahead_mapping(e_prime)
    d_dot_sp = delta_d_dot * theta_l_lon + d_dot_p
    return d_dot_p, delta_d_dot, theta_l_lon, d_dot_sp


def longitudinal_setpoint(e_lon, v_g, t_pd, cfg: GuidanceConfig) -> tuple[float, float]:
    """Vertical velocity setpoint and normalized longitudinal error.

    `t_pd` is the down component of the unit path tangent; the on-track
    vertical rate is the ground speed projected on it, clamped to the
    climb/sink envelope.
    """
    v_g = np.asarray(v_g, dtype=float)
    _, _, _, d_dot_sp = vertical_rate_terms(e_lon, v_g, t_pd, cfg)
    d_dot = float(v_g[2])
    eta_lon = (float(d_dot_sp) - d_dot) / (cfg.d_dot_clmb + cfg.d_dot_sink)
    return float(d_dot_sp), float(eta_lon)


def roll_feedforward(seg, v_g_lat, e_prime_lat, g: float) -> float:
    """Approximate bank angle for the current segment's turn.

    Zero on lines; on arcs and loiters the coordinated-turn bank for the
    current ground speed, faded out smoothly as the normalized lateral error
    approaches the boundary.
    """
    if isinstance(seg, LineSegment):
        return 0.0
    v_g_lat = np.asarray(v_g_lat, dtype=float)
    speed_sq = float(v_g_lat[0] ** 2 + v_g_lat[1] ** 2)
    bank = np.arctan(speed_sq / (g * seg.r_signed))
    fade = 0.5 * (1.0 + np.cos(np.pi * np.clip(e_prime_lat, 0.0, 1.0)))
    return float(bank * fade)


def guidance_errors(r, v_g, seg, cp: ClosestPoint, cfg: GuidanceConfig) -> GuidanceErrors:
    """Full guidance evaluation at one aircraft position.

    Raises ZeroGroundSpeedError when the horizontal ground speed vanishes;
    the caller holds the previous value in that case.
    """
    r = np.asarray(r, dtype=float)
    v_g = np.asarray(v_g, dtype=float)

    t_bar = path_tangent_2d(cp)
    e_lat = float(lateral_track_error(t_bar, cp.p, r))
    speed_lat = float(np.hypot(v_g[0], v_g[1]))
    e_b_lat = track_error_bound(speed_lat, cfg.t_b_lat)
    e_prime = min(abs(e_lat) / e_b_lat, 1.0)
    theta_l = lookahead_mapping(e_prime)
    l_hat = lateral_lookahead(t_bar, (cp.p - r)[:2], theta_l)
    eta_lat_val = eta_lat(l_hat, v_g[:2])

    e_lon = float(cp.p[2] - r[2])
    d_dot_sp, eta_lon_val = longitudinal_setpoint(e_lon, v_g, float(cp.t_hat[2]), cfg)

    return GuidanceErrors(eta_lat=eta_lat_val, eta_lon=eta_lon_val,
                          e_lat=e_lat, e_lon=e_lon, l_hat=l_hat, d_dot_sp=d_dot_sp)
