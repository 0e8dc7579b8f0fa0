"""Control-augmented fixed-wing flight model.

The airframe is abstracted at the autopilot interface: attitude references
and throttle command go in; the stabilized attitude/rate response, the
open-loop velocity-axis dynamics, and 3DOF position kinematics in wind come
out. The same derivative is used as simulation plant and as NMPC prediction
model.

Conventions: NED inertial axes (altitude is -d), all angles in radians,
angles stored wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * np.pi

# Guards for regimes where the model structure is undefined.
PROP_SPEED_FLOOR = 1.0   # m/s, minimum effective propeller free stream
COS_GAMMA_FLOOR = 0.05   # heading dynamics are singular in vertical flight

# State vector layout, shared by the plant, the predictor, and the estimators.
IDX_N, IDX_E, IDX_D = 0, 1, 2
IDX_VA, IDX_GAMMA, IDX_XI = 3, 4, 5
IDX_PHI, IDX_THETA = 6, 7
IDX_P, IDX_Q, IDX_R = 8, 9, 10
IDX_DELTA_T = 11
STATE_DIM = 12
ANGLE_STATES = (IDX_GAMMA, IDX_XI, IDX_PHI, IDX_THETA)

# Control vector layout.
IDX_U_T, IDX_PHI_REF, IDX_THETA_REF = 0, 1, 2
CONTROL_DIM = 3


class ModelDomainError(ValueError):
    """State left the domain where the model equations are valid."""


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), TWO_PI)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def angle_diff(a, b):
    """Smallest signed difference a - b, wrapped to (-pi, pi]."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


@dataclass(frozen=True)
class AircraftState:
    """Full aircraft state.

    Attributes
    ----------
    n, e, d : float
        Inertial position, NED (m).
    v_a : float
        Airspeed (m/s), strictly positive in nominal flight.
    gamma : float
        Air-relative flight path angle (rad).
    xi : float
        Heading of the airspeed vector from North (rad).
    phi, theta : float
        Roll and pitch angles (rad).
    p, q, r : float
        Body rates (rad/s).
    delta_t : float
        Throttle lag state, dimensionless in [0, 1].
    """

    n: float = 0.0
    e: float = 0.0
    d: float = 0.0
    v_a: float = 13.5
    gamma: float = 0.0
    xi: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    delta_t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.n, self.e, self.d, self.v_a, self.gamma, self.xi,
             self.phi, self.theta, self.p, self.q, self.r, self.delta_t])

    @classmethod
    def from_array(cls, x: np.ndarray) -> "AircraftState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"expected state vector of shape ({STATE_DIM},), got {x.shape}")
        return cls(*[float(v) for v in x])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.n, self.e, self.d])

    def wrapped(self) -> "AircraftState":
        """Copy with all stored angles wrapped to (-pi, pi]."""
        return replace(self, gamma=wrap_angle(self.gamma), xi=wrap_angle(self.xi),
                       phi=wrap_angle(self.phi), theta=wrap_angle(self.theta))


@dataclass(frozen=True)
class ControlInput:
    """Autopilot-level control: throttle plus attitude references."""

    u_t: float = 0.0        # throttle input, dimensionless [0, 1]
    phi_ref: float = 0.0    # roll reference (rad)
    theta_ref: float = 0.0  # pitch reference (rad)

    def as_array(self) -> np.ndarray:
        return np.array([self.u_t, self.phi_ref, self.theta_ref])

    @classmethod
    def from_array(cls, u: np.ndarray) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        if u.shape != (CONTROL_DIM,):
            raise ValueError(f"expected control vector of shape ({CONTROL_DIM},), got {u.shape}")
        return cls(float(u[0]), float(u[1]), float(u[2]))


@dataclass(frozen=True)
class WindVector:
    """Inertial wind, modeled as a static disturbance over one horizon."""

    w_n: float = 0.0
    w_e: float = 0.0
    w_d: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.w_n, self.w_e, self.w_d])


@dataclass(frozen=True)
class ClosedLoopParams:
    """Coefficients of the stabilized attitude/rate response.

    The attitude error gains must be positive (stabilizing sign); the
    pitch-rate row scales with airspeed squared.
    """

    l_p: float = -7.2
    l_r: float = 0.8
    l_ephi: float = 16.0
    m_0: float = 0.002
    m_alpha: float = -0.01
    m_q: float = -0.035
    m_etheta: float = 0.15
    n_r: float = -2.0
    n_phi: float = 0.8
    n_phiref: float = 0.65

    def __post_init__(self):
        if self.l_ephi <= 0.0 or self.m_etheta <= 0.0:
            raise ValueError("attitude error gains l_ephi and m_etheta must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.l_p, self.l_r, self.l_ephi, self.m_0, self.m_alpha,
                         self.m_q, self.m_etheta, self.n_r, self.n_phi, self.n_phiref])

    @classmethod
    def from_array(cls, v) -> "ClosedLoopParams":
        return cls(*[float(x) for x in v])


@dataclass(frozen=True)
class OpenLoopParams:
    """Throttle, drag, and lift coefficients of the non-stabilized dynamics.

    Thrust is modeled as a cubic power polynomial in the lagged throttle
    state divided by the effective propeller free stream; lift and drag are
    quadratic polynomials in angle of attack scaled by dynamic pressure.
    """

    c_t1: float = 40.0     # W per unit throttle state
    c_t2: float = 45.0     # W per unit throttle state squared
    c_t3: float = 65.0     # W per unit throttle state cubed
    tau_t: float = 0.4     # throttle lag time constant (s)
    c_d0: float = 0.035
    c_dalpha: float = 0.22
    c_dalpha2: float = 1.6
    c_l0: float = 0.40
    c_lalpha: float = 4.5
    c_lalpha2: float = 0.5

    def __post_init__(self):
        if self.tau_t <= 0.0:
            raise ValueError("throttle lag time constant tau_t must be > 0")
        if self.c_d0 <= 0.0:
            raise ValueError("parasitic drag c_d0 must be > 0")
        if self.c_lalpha <= 0.0:
            raise ValueError("lift slope c_lalpha must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.c_t1, self.c_t2, self.c_t3, self.tau_t,
                         self.c_d0, self.c_dalpha, self.c_dalpha2,
                         self.c_l0, self.c_lalpha, self.c_lalpha2])

    @classmethod
    def from_array(cls, v) -> "OpenLoopParams":
        return cls(*[float(x) for x in v])


@dataclass(frozen=True)
class PhysicalConstants:
    """Airframe mass/geometry constants and ambient air density.

    Defaults describe the nominal 2.65 kg, 2.6 m span test airframe at
    sea-level standard density.
    """

    m: float = 2.65        # kg
    g: float = 9.81        # m/s^2
    s_wing: float = 0.39   # m^2
    rho_air: float = 1.225  # kg/m^3

    def __post_init__(self):
        for name in ("m", "g", "s_wing", "rho_air"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"physical constant {name} must be > 0")


@dataclass(frozen=True)
class ModelParams:
    """Complete parameter set: closed-loop, open-loop, and physical constants."""

    closed_loop: ClosedLoopParams = field(default_factory=ClosedLoopParams)
    open_loop: OpenLoopParams = field(default_factory=OpenLoopParams)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)


def default_params() -> ModelParams:
    """Documented nominal parameter set for the 2.65 kg test airframe.

    Chosen so that (a) the static lift/drag/power curves have the expected
    qualitative shapes, (b) a level trim at 13.5 m/s exists with throttle in
    (0.3, 0.7) and angle of attack in (0 deg, 5 deg), and (c) the stabilized
    attitude response settles a 10 deg step in under 2 s.
    """
    return ModelParams()


@dataclass
class DynamicsDiagnostics:
    """Mutable counters for guard activations inside the dynamics."""

    prop_guard_count: int = 0


# ---------------------------------------------------------------------------
# Array core: every function below accepts state columns of shape (12,) or
# (12, B) and broadcasts elementwise, so the same code serves scalar calls,
# finite-difference batches, and parameter sweeps.
# ---------------------------------------------------------------------------

def power_curve(delta_t, ol: OpenLoopParams):
    """Motor power polynomial in the lagged throttle state (W)."""
    return ol.c_t1 * delta_t + ol.c_t2 * delta_t ** 2 + ol.c_t3 * delta_t ** 3


def forces_array(v_a, alpha, delta_t, ol: OpenLoopParams, consts: PhysicalConstants,
                 diag: DynamicsDiagnostics | None = None):
    """Thrust, drag, and lift (N) for airspeed/AoA/throttle-state arrays.

    The propeller free stream v_a*cos(alpha) is floored at PROP_SPEED_FLOOR;
    activations are counted on `diag` when provided.
    """
    v_a = np.asarray(v_a, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    delta_t = np.asarray(delta_t, dtype=float)

    v_prop = v_a * np.cos(alpha)
    clamped = v_prop < PROP_SPEED_FLOOR
    if diag is not None and np.any(clamped):
        diag.prop_guard_count += int(np.count_nonzero(clamped))
    v_prop = np.maximum(v_prop, PROP_SPEED_FLOOR)

    thrust = power_curve(delta_t, ol) / v_prop
    qbar_s = 0.5 * consts.rho_air * v_a ** 2 * consts.s_wing
    drag = qbar_s * (ol.c_d0 + ol.c_dalpha * alpha + ol.c_dalpha2 * alpha ** 2)
    lift = qbar_s * (ol.c_l0 + ol.c_lalpha * alpha + ol.c_lalpha2 * alpha ** 2)
    return thrust, drag, lift


def attitude_dynamics_array(x, u, cl: ClosedLoopParams):
    """Rates of [phi, theta, p, q, r] for the stabilized attitude response."""
    phi, theta = x[IDX_PHI], x[IDX_THETA]
    p, q, r = x[IDX_P], x[IDX_Q], x[IDX_R]
    v_a = x[IDX_VA]
    alpha = theta - x[IDX_GAMMA]
    phi_ref, theta_ref = u[IDX_PHI_REF], u[IDX_THETA_REF]

    phi_dot = p
    theta_dot = q * np.cos(phi) - r * np.sin(phi)
    p_dot = cl.l_p * p + cl.l_r * r + cl.l_ephi * (phi_ref - phi)
    q_dot = v_a ** 2 * (cl.m_0 + cl.m_alpha * alpha + cl.m_q * q
                        + cl.m_etheta * (theta_ref - theta))
    r_dot = cl.n_r * r + cl.n_phi * phi + cl.n_phiref * phi_ref
    return np.stack(np.broadcast_arrays(phi_dot, theta_dot, p_dot, q_dot, r_dot))


def velocity_dynamics_array(x, u, ol: OpenLoopParams, consts: PhysicalConstants,
                            diag: DynamicsDiagnostics | None = None):
    """Rates of [v_a, gamma, xi, delta_t] from the force balance."""
    v_a, gamma, phi, theta = x[IDX_VA], x[IDX_GAMMA], x[IDX_PHI], x[IDX_THETA]
    delta_t = x[IDX_DELTA_T]
    u_t = u[IDX_U_T]
    alpha = theta - gamma

    cos_gamma = np.cos(gamma)
    if np.any(np.abs(cos_gamma) < COS_GAMMA_FLOOR):
        raise ModelDomainError("flight path angle too close to vertical for heading dynamics")

    thrust, drag, lift = forces_array(v_a, alpha, delta_t, ol, consts, diag)
    m, g = consts.m, consts.g
    side_force = (thrust * np.sin(alpha) + lift)

    v_a_dot = (thrust * np.cos(alpha) - drag) / m - g * np.sin(gamma)
    gamma_dot = (side_force * np.cos(phi) - m * g * cos_gamma) / (m * v_a)
    xi_dot = np.sin(phi) * side_force / (m * v_a * cos_gamma)
    delta_t_dot = (u_t - delta_t) / ol.tau_t
    return np.stack(np.broadcast_arrays(v_a_dot, gamma_dot, xi_dot, delta_t_dot))


def kinematics_array(x, wind: WindVector):
    """Position rates [n_dot, e_dot, d_dot] in wind."""
    v_a, gamma, xi = x[IDX_VA], x[IDX_GAMMA], x[IDX_XI]
    cos_gamma = np.cos(gamma)
    n_dot = v_a * cos_gamma * np.cos(xi) + wind.w_n
    e_dot = v_a * cos_gamma * np.sin(xi) + wind.w_e
    d_dot = -v_a * np.sin(gamma) + wind.w_d
    return np.stack(np.broadcast_arrays(n_dot, e_dot, d_dot))


def body_accelerations_array(x, ol: OpenLoopParams, consts: PhysicalConstants,
                             diag: DynamicsDiagnostics | None = None):
    """x-body and z-body specific accelerations (m/s^2).

    Note the rotation's (2,2) entry is -cos(alpha): positive lift maps to
    negative a_z in the down-positive body axis.
    """
    alpha = x[IDX_THETA] - x[IDX_GAMMA]
    thrust, drag, lift = forces_array(x[IDX_VA], alpha, x[IDX_DELTA_T], ol, consts, diag)
    f_xv = (thrust * np.cos(alpha) - drag) / consts.m
    f_zv = (thrust * np.sin(alpha) + lift) / consts.m
    a_x = np.cos(alpha) * f_xv + np.sin(alpha) * f_zv
    a_z = np.sin(alpha) * f_xv - np.cos(alpha) * f_zv
    return a_x, a_z


def _derivative_scalar(x, u, wind: WindVector, params: ModelParams,
                       diag: DynamicsDiagnostics | None = None) -> np.ndarray:
    """Plain-float derivative for single states; the simulation hot path."""
    v_a, gamma, xi = float(x[IDX_VA]), float(x[IDX_GAMMA]), float(x[IDX_XI])
    phi, theta = float(x[IDX_PHI]), float(x[IDX_THETA])
    p, q, r = float(x[IDX_P]), float(x[IDX_Q]), float(x[IDX_R])
    delta_t = float(x[IDX_DELTA_T])
    u_t, phi_ref, theta_ref = float(u[0]), float(u[1]), float(u[2])
    ol, cl, consts = params.open_loop, params.closed_loop, params.constants

    cos_gamma = math.cos(gamma)
    if abs(cos_gamma) < COS_GAMMA_FLOOR:
        raise ModelDomainError("flight path angle too close to vertical for heading dynamics")
    alpha = theta - gamma
    cos_a, sin_a = math.cos(alpha), math.sin(alpha)
    cos_phi, sin_phi = math.cos(phi), math.sin(phi)

    v_prop = v_a * cos_a
    if v_prop < PROP_SPEED_FLOOR:
        if diag is not None:
            diag.prop_guard_count += 1
        v_prop = PROP_SPEED_FLOOR
    power = ol.c_t1 * delta_t + ol.c_t2 * delta_t ** 2 + ol.c_t3 * delta_t ** 3
    thrust = power / v_prop
    qbar_s = 0.5 * consts.rho_air * v_a * v_a * consts.s_wing
    drag = qbar_s * (ol.c_d0 + ol.c_dalpha * alpha + ol.c_dalpha2 * alpha * alpha)
    lift = qbar_s * (ol.c_l0 + ol.c_lalpha * alpha + ol.c_lalpha2 * alpha * alpha)
    side_force = thrust * sin_a + lift
    m, g = consts.m, consts.g

    return np.array([
        v_a * cos_gamma * math.cos(xi) + wind.w_n,
        v_a * cos_gamma * math.sin(xi) + wind.w_e,
        -v_a * math.sin(gamma) + wind.w_d,
        (thrust * cos_a - drag) / m - g * math.sin(gamma),
        (side_force * cos_phi - m * g * cos_gamma) / (m * v_a),
        sin_phi * side_force / (m * v_a * cos_gamma),
        p,
        q * cos_phi - r * sin_phi,
        cl.l_p * p + cl.l_r * r + cl.l_ephi * (phi_ref - phi),
        v_a * v_a * (cl.m_0 + cl.m_alpha * alpha + cl.m_q * q
                     + cl.m_etheta * (theta_ref - theta)),
        cl.n_r * r + cl.n_phi * phi + cl.n_phiref * phi_ref,
        (u_t - delta_t) / ol.tau_t,
    ])


def derivative_array(x, u, wind: WindVector, params: ModelParams,
                     diag: DynamicsDiagnostics | None = None):
    """Full state derivative; single source of truth for plant and predictor."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1:
        return _derivative_scalar(x, u, wind, params, diag)
    out = np.empty_like(x)
    out[IDX_N:IDX_D + 1] = kinematics_array(x, wind)
    vel = velocity_dynamics_array(x, u, params.open_loop, params.constants, diag)
    out[IDX_VA], out[IDX_GAMMA], out[IDX_XI] = vel[0], vel[1], vel[2]
    out[IDX_DELTA_T] = vel[3]
    att = attitude_dynamics_array(x, u, params.closed_loop)
    out[IDX_PHI], out[IDX_THETA] = att[0], att[1]
    out[IDX_P], out[IDX_Q], out[IDX_R] = att[2], att[3], att[4]
    return out


def rk4_step_array(x, u, wind: WindVector, params: ModelParams, dt: float,
                   diag: DynamicsDiagnostics | None = None, check: bool = True):
    """Classical fourth-order Runge-Kutta step with post-step angle wrap."""
    if dt <= 0.0:
        raise ValueError("integration step dt must be > 0")
    x = np.asarray(x, dtype=float)
    k1 = derivative_array(x, u, wind, params, diag)
    k2 = derivative_array(x + 0.5 * dt * k1, u, wind, params, diag)
    k3 = derivative_array(x + 0.5 * dt * k2, u, wind, params, diag)
    k4 = derivative_array(x + dt * k3, u, wind, params, diag)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if x_next.ndim == 1:
        for idx in ANGLE_STATES:
            x_next[idx] = math.pi - ((math.pi - x_next[idx]) % TWO_PI)
    else:
        for idx in ANGLE_STATES:
            x_next[idx] = wrap_angle(x_next[idx])
    if check and not np.all(np.isfinite(x_next)):
        raise ModelDomainError("non-finite state after integration step")
    return x_next


# ---------------------------------------------------------------------------
# Dataclass-level API.
# ---------------------------------------------------------------------------

def angle_of_attack(state: AircraftState) -> float:
    """Angle of attack from the small-sideslip approximation theta - gamma."""
    return state.theta - state.gamma


def attitude_dynamics(state: AircraftState, control: ControlInput,
                      cl: ClosedLoopParams) -> np.ndarray:
    """d/dt of [phi, theta, p, q, r]."""
    x = state.as_array()
    if not np.all(np.isfinite(x)):
        raise ModelDomainError("non-finite state")
    return attitude_dynamics_array(x, control.as_array(), cl)


def forces(state: AircraftState, ol: OpenLoopParams, consts: PhysicalConstants,
           diag: DynamicsDiagnostics | None = None) -> tuple[float, float, float]:
    """(thrust, drag, lift) in Newtons at the given state."""
    t, d, l = forces_array(state.v_a, angle_of_attack(state), state.delta_t,
                           ol, consts, diag)
    return float(t), float(d), float(l)


def velocity_dynamics(state: AircraftState, control: ControlInput,
                      ol: OpenLoopParams, consts: PhysicalConstants,
                      diag: DynamicsDiagnostics | None = None) -> np.ndarray:
    """d/dt of [v_a, gamma, xi, delta_t]."""
    return velocity_dynamics_array(state.as_array(), control.as_array(), ol, consts, diag)


def kinematics(state: AircraftState, wind: WindVector) -> np.ndarray:
    """d/dt of [n, e, d]."""
    return kinematics_array(state.as_array(), wind)


def ground_velocity(state: AircraftState, wind: WindVector) -> np.ndarray:
    """Inertial ground velocity vector (same expression as the kinematics)."""
    return kinematics(state, wind)


def body_accelerations(state: AircraftState, ol: OpenLoopParams,
                       consts: PhysicalConstants) -> tuple[float, float]:
    """(a_x, a_z) body-axis specific accelerations."""
    a_x, a_z = body_accelerations_array(state.as_array(), ol, consts)
    return float(a_x), float(a_z)


def full_derivative(state: AircraftState, control: ControlInput, wind: WindVector,
                    params: ModelParams,
                    diag: DynamicsDiagnostics | None = None) -> np.ndarray:
    """Concatenated state derivative in the canonical state layout."""
    x = state.as_array()
    if not np.all(np.isfinite(x)):
        raise ModelDomainError("non-finite state")
    return derivative_array(x, control.as_array(), wind, params, diag)


def rk4_step(state: AircraftState, control: ControlInput, wind: WindVector,
             params: ModelParams, dt: float,
             diag: DynamicsDiagnostics | None = None) -> AircraftState:
    """Integrate one fixed step and return the wrapped successor state."""
    x_next = rk4_step_array(state.as_array(), control.as_array(), wind, params, dt, diag)
    return AircraftState.from_array(x_next)


# ---------------------------------------------------------------------------
# Trim.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrimPoint:
    """Steady wings-level flight condition at fixed airspeed and path angle."""

    v_a: float
    gamma: float
    alpha: float
    delta_t: float
    theta: float
    theta_ref: float
    u_t: float
    phi: float = 0.0

    def state(self, n: float = 0.0, e: float = 0.0, d: float = 0.0,
              xi: float = 0.0) -> AircraftState:
        return AircraftState(n=n, e=e, d=d, v_a=self.v_a, gamma=self.gamma, xi=xi,
                             phi=self.phi, theta=self.theta, p=0.0, q=0.0, r=0.0,
                             delta_t=self.delta_t)

    def control(self) -> ControlInput:
        return ControlInput(u_t=self.u_t, phi_ref=0.0, theta_ref=self.theta_ref)


def solve_trim(params: ModelParams, v_a: float, gamma: float = 0.0,
               tol: float = 1e-12, max_iter: int = 60) -> TrimPoint:
    """Solve the wings-level force balance for (alpha, delta_t) by Newton iteration.

    Raises ModelDomainError if no balance exists within throttle and angle
    limits (e.g. a commanded climb beyond the power available).
    """
    ol, consts = params.open_loop, params.constants
    m, g = consts.m, consts.g

    def residual(z):
        alpha, delta_t = z
        thrust, drag, lift = forces_array(v_a, alpha, delta_t, ol, consts)
        f1 = (thrust * np.cos(alpha) - drag) / m - g * np.sin(gamma)
        f2 = ((thrust * np.sin(alpha) + lift) - m * g * np.cos(gamma)) / (m * v_a)
        return np.array([float(f1), float(f2)])

    z = np.array([0.03, 0.5])
    for _ in range(max_iter):
        f = residual(z)
        if np.linalg.norm(f, np.inf) < tol:
            break
        jac = np.empty((2, 2))
        for j in range(2):
            h = 1e-7 * max(1.0, abs(z[j]))
            zp = z.copy()
            zp[j] += h
            jac[:, j] = (residual(zp) - f) / h
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise ModelDomainError("trim Newton iteration hit a singular Jacobian") from exc
        z = z + step
    else:
        raise ModelDomainError(f"trim iteration did not converge at v_a={v_a}, gamma={gamma}")

    alpha, delta_t = float(z[0]), float(z[1])
    if not (0.0 <= delta_t <= 1.0):
        raise ModelDomainError(f"trim throttle {delta_t:.3f} outside [0, 1]")
    if abs(alpha) > 0.35:
        raise ModelDomainError(f"trim angle of attack {np.degrees(alpha):.1f} deg implausible")

    cl = params.closed_loop
    theta = alpha + gamma
    # Pitch-rate equilibrium at q = 0 fixes the reference offset.
    theta_ref = theta - (cl.m_0 + cl.m_alpha * alpha) / cl.m_etheta
    return TrimPoint(v_a=v_a, gamma=gamma, alpha=alpha, delta_t=delta_t,
                     theta=theta, theta_ref=theta_ref, u_t=delta_t)
