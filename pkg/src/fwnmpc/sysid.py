"""Grey-box output-error identification on synthetic flight data.

Two decoupled model structures are estimated: the stabilized attitude
response (states phi/theta/p/q/r, with airspeed and flight path angle fed
from logged data) and the non-stabilized velocity-axis dynamics (states
v_a/gamma/delta_t, with attitude fed from logged data, body accelerations in
the output set). Estimation is Levenberg-Marquardt on channel-weighted
output residuals; static force/power curves are fit first by linear least
squares on quasi-static samples to seed the nonlinear estimate.

All simulators vectorize over a batch of parameter vectors, which makes the
finite-difference residual Jacobians a single batched pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from fwnmpc import model as md

CL_PARAM_NAMES = ("l_p", "l_r", "l_ephi", "m_0", "m_alpha", "m_q", "m_etheta",
                  "n_r", "n_phi", "n_phiref")
OL_PARAM_NAMES = ("c_t1", "c_t2", "c_t3", "tau_t", "c_d0", "c_dalpha",
                  "c_dalpha2", "c_l0", "c_lalpha", "c_lalpha2")

CL_INPUTS = ("phi_ref", "theta_ref", "v_a", "gamma")
CL_OUTPUTS = ("phi", "theta", "p", "q", "r")
OL_INPUTS = ("phi", "theta", "u_t")
OL_OUTPUTS = ("v_a", "gamma", "a_x", "a_z")
FULL_INPUTS = ("u_t", "phi_ref", "theta_ref")
FULL_OUTPUTS = ("phi", "theta", "p", "q", "r", "v_a", "gamma", "a_x", "a_z")

# validation-set error magnitudes used as default channel normalization
DEFAULT_CHANNEL_WEIGHTS = {
    "phi": np.radians(1.610), "theta": np.radians(0.921),
    "p": np.radians(5.140), "q": np.radians(3.390), "r": np.radians(2.650),
    "v_a": 0.424, "gamma": np.radians(1.680), "a_x": 0.217, "a_z": 0.660,
}


class SysidError(ValueError):
    """Estimation pipeline error."""


class RankDeficiencyError(SysidError):
    """The static-curve regression has insufficient excitation."""


@dataclass(frozen=True)
class ManeuverSpec:
    """Excitation maneuver description around a trim point."""

    kind: str = "dynamic_211"          # static | dynamic_211 | freeform
    v_a: float = 13.5                  # trim airspeed (m/s)
    gamma: float = 0.0                 # trim flight path angle (rad)
    channels: tuple = ("phi_ref",)     # stepped channels
    amplitude: dict | float = 0.2      # per-channel or shared step amplitude
    base_width: float = 1.0            # s, the "1" of the 2-1-1 pattern
    settle_time: float = 2.0           # s at trim before the steps
    duration: float = 14.0             # s total
    sample_rate: float = 40.0          # Hz

    def __post_init__(self):
        if self.kind not in ("static", "dynamic_211", "freeform"):
            raise ValueError(f"unknown maneuver kind {self.kind!r}")
        if self.sample_rate <= 0 or self.base_width <= 0 or self.duration <= 0:
            raise ValueError("maneuver timing parameters must be positive")
        for ch in self.channels:
            if ch not in ("u_t", "phi_ref", "theta_ref"):
                raise ValueError(f"unknown step channel {ch!r}")

    def amplitude_for(self, channel: str) -> float:
        if isinstance(self.amplitude, dict):
            return float(self.amplitude[channel])
        return float(self.amplitude)


@dataclass
class Dataset:
    """Uniformly sampled input/output records for one experiment."""

    structure: str                 # cl | ol | static | full
    t: np.ndarray
    inputs: dict
    outputs: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        dt = np.diff(self.t)
        if self.t.size < 2 or np.max(np.abs(dt - dt[0])) > 1e-9:
            raise ValueError("dataset must be uniformly sampled")
        n = self.t.size
        for name, arr in {**self.inputs, **self.outputs}.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"channel {name!r} length mismatch")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass
class FitReport:
    """Estimation result with a Gauss-Newton covariance approximation."""

    structure: str
    param_names: tuple
    params: np.ndarray
    init_params: np.ndarray
    cost: float
    n_iter: int
    converged: bool
    message: str
    per_output_rmse: dict
    param_std: np.ndarray
    covariance: np.ndarray


# ---------------------------------------------------------------------------
# Maneuver generation.
# ---------------------------------------------------------------------------

def generate_211(spec: ManeuverSpec) -> tuple[np.ndarray, dict]:
    """Reference offsets for a 2-1-1 maneuver: alternating pulses of width
    2w, w, w with signs (+, -, +), after a settling period at trim."""
    n = int(round(spec.duration * spec.sample_rate)) + 1
    t = np.arange(n) / spec.sample_rate
    offsets = {}
    t0, w = spec.settle_time, spec.base_width
    for ch in spec.channels:
        amp = spec.amplitude_for(ch)
        series = np.zeros(n)
        series[(t >= t0) & (t < t0 + 2 * w)] = amp
        series[(t >= t0 + 2 * w) & (t < t0 + 3 * w)] = -amp
        series[(t >= t0 + 3 * w) & (t < t0 + 4 * w)] = amp
        offsets[ch] = series
    return t, offsets


def _freeform_offsets(spec: ManeuverSpec, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Smooth pseudo-random reference wandering for hold-out testing."""
    n = int(round(spec.duration * spec.sample_rate)) + 1
    t = np.arange(n) / spec.sample_rate
    offsets = {}
    for ch in spec.channels:
        amp = spec.amplitude_for(ch)
        series = np.zeros(n)
        for freq, phase, gain in zip(rng.uniform(0.05, 0.35, 4),
                                     rng.uniform(0, 2 * np.pi, 4),
                                     rng.uniform(0.3, 1.0, 4)):
            series += gain * np.sin(2 * np.pi * freq * t + phase)
        series *= amp / max(np.max(np.abs(series)), 1e-9)
        series[t < spec.settle_time] = 0.0
        offsets[ch] = series
    return t, offsets


# ---------------------------------------------------------------------------
# Structure simulators, batched over parameter vectors.
# ---------------------------------------------------------------------------

def _as_param_matrix(params, names) -> np.ndarray:
    if isinstance(params, (md.ClosedLoopParams, md.OpenLoopParams)):
        vec = params.as_array()
    else:
        vec = np.asarray(params, dtype=float)
    if vec.ndim == 1:
        vec = vec[:, None]
    if vec.shape[0] != len(names):
        raise ValueError(f"expected {len(names)} parameters, got {vec.shape[0]}")
    return vec


def _interp_inputs(series: np.ndarray):
    """Left, midpoint, and right samples per interval for the RK4 substeps."""
    left = series[:-1]
    right = series[1:]
    return left, 0.5 * (left + right), right


def _stack_inputs(datasets: list, names) -> dict:
    """Column-stack one input channel per dataset: name -> (T, D)."""
    return {name: np.column_stack([np.asarray(ds.inputs[name], dtype=float)
                                   for ds in datasets])
            for name in names}


# samples averaged for the simulator initial condition; maneuvers start from
# a settled trim, so averaging the first 0.2 s suppresses measurement noise
# in the initial state without biasing it
INIT_AVG_SAMPLES = 8


def _initial_value(channel) -> float:
    arr = np.asarray(channel, dtype=float)
    return float(np.mean(arr[:min(INIT_AVG_SAMPLES, arr.size)]))


def _expand(arr: np.ndarray, b: int) -> np.ndarray:
    """Repeat dataset columns for each parameter column (dataset-major)."""
    return np.repeat(arr, b, axis=-1)


def _cl_core(p: np.ndarray, n: int, h: float, subs: dict, init: np.ndarray) -> np.ndarray:
    """Shared attitude-structure integration over stacked columns.

    `p` is (10, M) with parameter columns already tiled to match the M =
    n_datasets * n_params layout of `subs` (per-channel (3, n-1, M) substep
    inputs) and `init` (5, M). Returns (5, n, M).
    """
    l_p, l_r, l_ephi, m_0, m_alpha, m_q, m_etheta, n_r, n_phi, n_phiref = p
    pr_in, th_in, va_in, ga_in = (subs[name] for name in CL_INPUTS)

    def deriv(s, phi_ref, theta_ref, v_a, gamma):
        phi, theta, pr, qr, rr = s
        alpha = theta - gamma
        return np.stack([
            pr,
            qr * np.cos(phi) - rr * np.sin(phi),
            l_p * pr + l_r * rr + l_ephi * (phi_ref - phi),
            v_a ** 2 * (m_0 + m_alpha * alpha + m_q * qr + m_etheta * (theta_ref - theta)),
            n_r * rr + n_phi * phi + n_phiref * phi_ref,
        ])

    x = np.empty((5, n, init.shape[1]))
    state = init
    x[:, 0, :] = state
    # unstable parameter trials may overflow; the estimator checks for
    # non-finite cost explicitly, so silence the intermediate warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n - 1):
            k1 = deriv(state, pr_in[0, k], th_in[0, k], va_in[0, k], ga_in[0, k])
            k2 = deriv(state + 0.5 * h * k1, pr_in[1, k], th_in[1, k], va_in[1, k],
                       ga_in[1, k])
            k3 = deriv(state + 0.5 * h * k2, pr_in[1, k], th_in[1, k], va_in[1, k],
                       ga_in[1, k])
            k4 = deriv(state + h * k3, pr_in[2, k], th_in[2, k], va_in[2, k],
                       ga_in[2, k])
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            x[:, k + 1, :] = state
    return x


def _stacked_subs(inputs: dict, b: int) -> dict:
    """Per-channel substep arrays (left/mid/right) expanded to M columns."""
    subs = {}
    for name, arr in inputs.items():
        left, mid, right = _interp_inputs(arr)
        subs[name] = np.stack([_expand(left, b), _expand(mid, b), _expand(right, b)])
    return subs


def simulate_cl(params, dataset: Dataset) -> np.ndarray:
    """Simulate the stabilized attitude structure over the dataset inputs.

    Returns outputs with shape (5, T) for a single parameter vector or
    (5, T, B) for a batch.
    """
    p = _as_param_matrix(params, CL_PARAM_NAMES)
    b = p.shape[1]
    inputs = {name: np.asarray(dataset.inputs[name], dtype=float)[:, None]
              for name in CL_INPUTS}
    init = np.tile(np.array([[_initial_value(dataset.outputs[c])] for c in CL_OUTPUTS]),
                   (1, b))
    x = _cl_core(p, dataset.t.size, dataset.dt, _stacked_subs(inputs, b), init)
    return x[:, :, 0] if _squeeze(params) else x


def _squeeze(params) -> bool:
    if isinstance(params, (md.ClosedLoopParams, md.OpenLoopParams)):
        return True
    return np.asarray(params).ndim == 1


def _ol_core(p: np.ndarray, n: int, h: float, subs: dict, theta_rec: np.ndarray,
             init: np.ndarray, consts: md.PhysicalConstants) -> np.ndarray:
    """Shared velocity-axis integration over stacked columns.

    `theta_rec` is the (n, M) pitch record used to reconstruct the body
    accelerations at the sample instants. Returns (4, n, M).
    """
    c_t1, c_t2, c_t3, tau_t, c_d0, c_da, c_da2, c_l0, c_la, c_la2 = p
    m, g = consts.m, consts.g
    half_rho_s = 0.5 * consts.rho_air * consts.s_wing
    ph_in, th_in, ut_in = (subs[name] for name in OL_INPUTS)

    def forces(v_a, alpha, delta_t):
        v_prop = np.maximum(v_a * np.cos(alpha), md.PROP_SPEED_FLOOR)
        thrust = (c_t1 * delta_t + c_t2 * delta_t ** 2 + c_t3 * delta_t ** 3) / v_prop
        qbar_s = half_rho_s * v_a ** 2
        drag = qbar_s * (c_d0 + c_da * alpha + c_da2 * alpha ** 2)
        lift = qbar_s * (c_l0 + c_la * alpha + c_la2 * alpha ** 2)
        return thrust, drag, lift

    def deriv(s, phi, theta, u_t):
        v_a, gamma, delta_t = s
        alpha = theta - gamma
        thrust, drag, lift = forces(v_a, alpha, delta_t)
        side = thrust * np.sin(alpha) + lift
        return np.stack([
            (thrust * np.cos(alpha) - drag) / m - g * np.sin(gamma),
            (side * np.cos(phi) - m * g * np.cos(gamma)) / (m * v_a),
            (u_t - delta_t) / tau_t,
        ])

    out = np.empty((4, n, init.shape[1]))
    state = init

    def record(k, s):
        v_a, gamma, delta_t = s
        alpha = theta_rec[k] - gamma
        thrust, drag, lift = forces(v_a, alpha, delta_t)
        f_xv = (thrust * np.cos(alpha) - drag) / m
        f_zv = (thrust * np.sin(alpha) + lift) / m
        out[0, k] = v_a
        out[1, k] = gamma
        out[2, k] = np.cos(alpha) * f_xv + np.sin(alpha) * f_zv
        out[3, k] = np.sin(alpha) * f_xv - np.cos(alpha) * f_zv

    with np.errstate(over="ignore", invalid="ignore"):
        record(0, state)
        for k in range(n - 1):
            k1 = deriv(state, ph_in[0, k], th_in[0, k], ut_in[0, k])
            k2 = deriv(state + 0.5 * h * k1, ph_in[1, k], th_in[1, k], ut_in[1, k])
            k3 = deriv(state + 0.5 * h * k2, ph_in[1, k], th_in[1, k], ut_in[1, k])
            k4 = deriv(state + h * k3, ph_in[2, k], th_in[2, k], ut_in[2, k])
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            record(k + 1, state)
    return out


def simulate_ol(params, dataset: Dataset,
                constants: md.PhysicalConstants | None = None) -> np.ndarray:
    """Simulate the velocity-axis structure; outputs [v_a, gamma, a_x, a_z]."""
    consts = constants or md.PhysicalConstants()
    p = _as_param_matrix(params, OL_PARAM_NAMES)
    b = p.shape[1]
    inputs = {name: np.asarray(dataset.inputs[name], dtype=float)[:, None]
              for name in OL_INPUTS}
    init = np.tile(np.array([[_initial_value(dataset.outputs["v_a"])],
                             [_initial_value(dataset.outputs["gamma"])],
                             [_initial_value(dataset.inputs["u_t"])]]), (1, b))
    theta_rec = _expand(inputs["theta"], b)
    out = _ol_core(p, dataset.t.size, dataset.dt, _stacked_subs(inputs, b),
                   theta_rec, init, consts)
    return out[:, :, 0] if _squeeze(params) else out


def simulate_structure(structure: str, params, dataset: Dataset,
                       constants: md.PhysicalConstants | None = None) -> np.ndarray:
    """Dispatch to the closed-loop or open-loop structure simulator."""
    if structure == "cl":
        return simulate_cl(params, dataset)
    if structure == "ol":
        return simulate_ol(params, dataset, constants)
    raise ValueError(f"unknown structure {structure!r}")


def _output_names(structure: str) -> tuple:
    return CL_OUTPUTS if structure == "cl" else OL_OUTPUTS


def _channel_weights(structure: str, weights: dict | None) -> np.ndarray:
    table = dict(DEFAULT_CHANNEL_WEIGHTS)
    if weights:
        table.update(weights)
    return np.array([table[name] for name in _output_names(structure)])


def residual_vector(structure: str, params, datasets: list, weights: dict | None = None,
                    constants: md.PhysicalConstants | None = None) -> np.ndarray:
    """Channel-normalized output residuals stacked over all datasets.

    Shape (n_res,) for a single parameter vector, (n_res, B) for a batch.
    Equal-length datasets are integrated together in one stacked pass, which
    is what keeps the finite-difference Jacobians cheap.
    """
    if structure not in ("cl", "ol"):
        raise ValueError(f"unknown structure {structure!r}")
    w = _channel_weights(structure, weights)
    out_names = _output_names(structure)
    in_names = CL_INPUTS if structure == "cl" else OL_INPUTS
    consts = constants or md.PhysicalConstants()

    p = _as_param_matrix(params, CL_PARAM_NAMES if structure == "cl" else OL_PARAM_NAMES)
    b = p.shape[1]

    groups: dict = {}
    for i, ds in enumerate(datasets):
        groups.setdefault((ds.t.size, round(ds.dt, 12)), []).append(i)

    sims: list = [None] * len(datasets)
    for (n, h), idxs in groups.items():
        group = [datasets[i] for i in idxs]
        d = len(group)
        p_tiled = np.tile(p, (1, d))
        stacked = _stack_inputs(group, in_names)
        subs = _stacked_subs(stacked, b)
        if structure == "cl":
            init = _expand(np.array([[_initial_value(ds.outputs[c]) for ds in group]
                                     for c in CL_OUTPUTS]), b)
            x = _cl_core(p_tiled, n, h, subs, init)
        else:
            init = _expand(np.array(
                [[_initial_value(ds.outputs["v_a"]) for ds in group],
                 [_initial_value(ds.outputs["gamma"]) for ds in group],
                 [_initial_value(ds.inputs["u_t"]) for ds in group]]), b)
            theta_rec = _expand(stacked["theta"], b)
            x = _ol_core(p_tiled, n, h, subs, theta_rec, init, consts)
        for j, i in enumerate(idxs):
            sims[i] = x[:, :, j * b:(j + 1) * b]

    parts = []
    for ds, sim in zip(datasets, sims):
        meas = np.stack([np.asarray(ds.outputs[name], dtype=float)
                         for name in out_names])
        res = (sim - meas[:, :, None]) / w[:, None, None]
        parts.append(res.reshape(-1, b))
    stacked_res = np.concatenate(parts, axis=0)
    return stacked_res[:, 0] if _squeeze(params) else stacked_res


def output_error_cost(structure: str, params, datasets: list, weights: dict | None = None,
                      constants: md.PhysicalConstants | None = None) -> float:
    """Weighted sum of squared output residuals over all samples."""
    r = residual_vector(structure, params, datasets, weights, constants)
    if r.ndim != 1:
        raise ValueError("output_error_cost expects a single parameter vector")
    return float(r @ r)


# ---------------------------------------------------------------------------
# Static-curve initial fit.
# ---------------------------------------------------------------------------

RATE_THRESHOLD = float(np.radians(1.0))  # quasi-static body-rate gate (rad/s)


def fit_static_curves(datasets: list, constants: md.PhysicalConstants | None = None,
                      rate_threshold: float = RATE_THRESHOLD,
                      tau_t_default: float = 0.5):
    """Linear least squares for the lift/drag quadratics and the cubic power
    polynomial from quasi-static samples.

    Samples with any body rate above the threshold are discarded. Solves the
    joint system given by the body-axis acceleration rows, which is linear in
    all nine force/power coefficients. The throttle lag cannot be observed
    statically, so `tau_t_default` seeds it.

    Returns (OpenLoopParams initial guess, diagnostics dict). Raises
    RankDeficiencyError when the excitation cannot separate the coefficients
    (e.g. a single angle of attack).
    """
    consts = constants or md.PhysicalConstants()
    rows, rhs = [], []
    n_total = n_kept = 0
    for ds in datasets:
        need = ("v_a", "gamma", "theta", "u_t", "a_x", "a_z", "p", "q", "r")
        chans = {**ds.inputs, **ds.outputs}
        missing = [c for c in need if c not in chans]
        if missing:
            raise SysidError(f"static dataset missing channels {missing}")
        v_a = np.asarray(chans["v_a"], dtype=float)
        alpha = np.asarray(chans["theta"], dtype=float) - np.asarray(chans["gamma"], dtype=float)
        delta = np.asarray(chans["u_t"], dtype=float)
        a_x = np.asarray(chans["a_x"], dtype=float)
        a_z = np.asarray(chans["a_z"], dtype=float)
        quiet = (np.abs(chans["p"]) < rate_threshold) \
            & (np.abs(chans["q"]) < rate_threshold) \
            & (np.abs(chans["r"]) < rate_threshold)
        n_total += v_a.size
        n_kept += int(np.count_nonzero(quiet))
        v, al, de = v_a[quiet], alpha[quiet], delta[quiet]
        ax, az = a_x[quiet], a_z[quiet]
        qbar_s = 0.5 * consts.rho_air * v ** 2 * consts.s_wing
        m = consts.m
        # x-axis combination: P/v - qS*C_D = m(cos(a) a_x + sin(a) a_z)
        for i in range(v.size):
            rows.append([de[i] / v[i], de[i] ** 2 / v[i], de[i] ** 3 / v[i],
                         -qbar_s[i], -qbar_s[i] * al[i], -qbar_s[i] * al[i] ** 2,
                         0.0, 0.0, 0.0])
            rhs.append(m * (np.cos(al[i]) * ax[i] + np.sin(al[i]) * az[i]))
            # z-axis combination: P tan(a)/v + qS*C_L = m(sin(a) a_x - cos(a) a_z)
            tan_a = np.tan(al[i])
            rows.append([de[i] * tan_a / v[i], de[i] ** 2 * tan_a / v[i],
                         de[i] ** 3 * tan_a / v[i], 0.0, 0.0, 0.0,
                         qbar_s[i], qbar_s[i] * al[i], qbar_s[i] * al[i] ** 2])
            rhs.append(m * (np.sin(al[i]) * ax[i] - np.cos(al[i]) * az[i]))
    if not rows:
        raise RankDeficiencyError("no quasi-static samples left after rate filtering")
    a_mat = np.array(rows)
    b_vec = np.array(rhs)
    if np.linalg.matrix_rank(a_mat, tol=1e-8) < 9:
        raise RankDeficiencyError("static excitation is rank deficient; vary "
                                  "airspeed, angle of attack, and throttle")
    coef, residuals, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    guess = md.OpenLoopParams(
        c_t1=coef[0], c_t2=coef[1], c_t3=coef[2], tau_t=tau_t_default,
        c_d0=max(coef[3], 1e-4), c_dalpha=coef[4], c_dalpha2=coef[5],
        c_l0=coef[6], c_lalpha=max(coef[7], 1e-3), c_lalpha2=coef[8])
    diag = {"n_samples": n_total, "n_quasi_static": n_kept,
            "residual_norm": float(np.sqrt(residuals[0])) if np.size(residuals) else 0.0}
    return guess, diag


# ---------------------------------------------------------------------------
# Levenberg-Marquardt estimation.
# ---------------------------------------------------------------------------

def estimate(structure: str, initial_params, datasets: list,
             weights: dict | None = None,
             constants: md.PhysicalConstants | None = None,
             max_iter: int = 200, grad_tol: float = 1e-8,
             step_tol: float = 1e-10) -> FitReport:
    """Minimize the output-error cost by Levenberg-Marquardt.

    Damping starts at 1e-3 with the usual divide-by-10 on success and
    multiply-by-10 on rejection. Terminates on gradient norm, step norm, or
    the iteration cap. The report carries a Gauss-Newton covariance so weakly
    identifiable directions are visible rather than hidden.
    """
    names = CL_PARAM_NAMES if structure == "cl" else OL_PARAM_NAMES
    p = _as_param_matrix(initial_params, names)[:, 0].copy()
    init = p.copy()
    n_par = p.size

    def res(vec):
        return residual_vector(structure, vec, datasets, weights, constants)

    def jacobian(vec, r0):
        # step small enough that forward-difference truncation stays below
        # the 1e-5 agreement bound against a central-difference oracle
        steps = np.maximum(5e-8 * np.abs(vec), 1e-10)
        batch = np.repeat(vec[:, None], n_par, axis=1)
        batch[np.arange(n_par), np.arange(n_par)] += steps
        r_batch = residual_vector(structure, batch, datasets, weights, constants)
        return (r_batch - r0[:, None]) / steps[None, :]

    r = res(p)
    with np.errstate(over="ignore"):
        cost = float(r @ r)
    if not np.isfinite(cost):
        return _failed_report(structure, names, p, init, cost, "non-finite initial cost",
                              datasets, weights, constants)

    lam = 1e-3
    n_accepted = 0
    message = "max iterations reached"
    converged = False
    jac = None
    for _ in range(max_iter):
        jac = jacobian(p, r)
        grad = jac.T @ r
        if np.linalg.norm(grad, np.inf) < grad_tol:
            converged = True
            message = "gradient tolerance reached"
            break
        h_mat = jac.T @ jac
        d_vec = np.maximum(np.diag(h_mat), 1e-12)
        accepted = False
        while lam <= 1e10:
            try:
                step = np.linalg.solve(h_mat + lam * np.diag(d_vec), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + step
            r_try = res(p_try)
            with np.errstate(over="ignore"):
                cost_try = float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try < cost:
                p, r, cost = p_try, r_try, cost_try
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                n_accepted += 1
                break
            lam *= 10.0
        if not accepted:
            converged = True
            message = "no further decrease (damping limit)"
            break
        if np.linalg.norm(step) < step_tol:
            converged = True
            message = "step tolerance reached"
            break
    if not np.isfinite(cost):
        return _failed_report(structure, names, p, init, cost, "diverged",
                              datasets, weights, constants)

    if jac is None:
        jac = jacobian(p, r)
    dof = max(r.size - n_par, 1)
    sigma_sq = cost / dof
    try:
        cov = sigma_sq * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        cov = sigma_sq * np.linalg.pinv(jac.T @ jac)
    std = np.sqrt(np.maximum(np.diag(cov), 0.0))

    return FitReport(structure=structure, param_names=names, params=p,
                     init_params=init, cost=cost, n_iter=n_accepted,
                     converged=converged, message=message,
                     per_output_rmse=validate(structure, p, datasets, constants),
                     param_std=std, covariance=cov)


def _failed_report(structure, names, p, init, cost, message, datasets, weights,
                   constants) -> FitReport:
    n = len(names)
    return FitReport(structure=structure, param_names=names, params=p,
                     init_params=init, cost=float(cost), n_iter=0, converged=False,
                     message=message, per_output_rmse={},
                     param_std=np.full(n, np.nan),
                     covariance=np.full((n, n), np.nan))


def validate(structure: str, params, datasets: list,
             constants: md.PhysicalConstants | None = None) -> dict:
    """Unweighted per-output RMSE over the given (held-out) datasets."""
    names = _output_names(structure)
    sq_sum = {name: 0.0 for name in names}
    count = 0
    for ds in datasets:
        sim = simulate_structure(structure, params, ds, constants)
        count += ds.t.size
        for i, name in enumerate(names):
            err = sim[i] - np.asarray(ds.outputs[name], dtype=float)
            sq_sum[name] += float(err @ err)
    return {name: float(np.sqrt(sq_sum[name] / count)) for name in names}


def train_validate_split(datasets: list, train_fraction: float = 0.7,
                         seed: int = 0) -> tuple[list, list]:
    """Shuffle and split experiment sets into training and validation groups."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(datasets))
    n_train = int(round(train_fraction * len(datasets)))
    n_train = min(max(n_train, 1), len(datasets) - 1) if len(datasets) > 1 else 1
    train = [datasets[i] for i in order[:n_train]]
    val = [datasets[i] for i in order[n_train:]]
    return train, val


# ---------------------------------------------------------------------------
# Synthetic data generation.
# ---------------------------------------------------------------------------

def _full_model_run(params: md.ModelParams, spec: ManeuverSpec,
                    rng: np.random.Generator | None = None):
    """Drive the full model with maneuver references; returns channel dict."""
    trim = md.solve_trim(params, spec.v_a, spec.gamma)
    if spec.kind == "freeform":
        t, offsets = _freeform_offsets(spec, rng or np.random.default_rng(0))
    else:
        t, offsets = generate_211(spec)
        if spec.kind == "static":
            offsets = {ch: np.zeros_like(t) for ch in offsets}
    n = t.size
    zero = np.zeros(n)
    u_t = trim.u_t + offsets.get("u_t", zero)
    phi_ref = offsets.get("phi_ref", zero).copy()
    theta_ref = trim.theta_ref + offsets.get("theta_ref", zero)
    u_t = np.clip(u_t, 0.0, 1.0)

    state = trim.state().as_array()
    h = 1.0 / spec.sample_rate
    wind = md.WindVector()
    chans = {name: np.empty(n) for name in
             ("phi", "theta", "p", "q", "r", "v_a", "gamma", "a_x", "a_z",
              "u_t", "phi_ref", "theta_ref")}

    for k in range(n):
        chans["phi"][k] = state[md.IDX_PHI]
        chans["theta"][k] = state[md.IDX_THETA]
        chans["p"][k] = state[md.IDX_P]
        chans["q"][k] = state[md.IDX_Q]
        chans["r"][k] = state[md.IDX_R]
        chans["v_a"][k] = state[md.IDX_VA]
        chans["gamma"][k] = state[md.IDX_GAMMA]
        a_x, a_z = md.body_accelerations_array(state, params.open_loop, params.constants)
        chans["a_x"][k] = a_x
        chans["a_z"][k] = a_z
        chans["u_t"][k] = u_t[k]
        chans["phi_ref"][k] = phi_ref[k]
        chans["theta_ref"][k] = theta_ref[k]
        if k < n - 1:
            u_now = np.array([u_t[k], phi_ref[k], theta_ref[k]])
            state = md.rk4_step_array(state, u_now, wind, params, h)
    return t, chans


def make_cl_dataset(params: md.ModelParams, spec: ManeuverSpec,
                    rng: np.random.Generator | None = None) -> Dataset:
    """Closed-loop structure dataset with self-consistent outputs.

    Airspeed and flight path angle come from a full-model run (realistic
    trajectories); the outputs are regenerated by the structure simulator at
    the true parameters, so the estimation target is exactly representable.
    """
    t, chans = _full_model_run(params, spec, rng)
    inputs = {name: chans[name] for name in CL_INPUTS}
    seed_outputs = {name: chans[name] for name in CL_OUTPUTS}
    ds = Dataset(structure="cl", t=t, inputs=inputs, outputs=seed_outputs,
                 meta={"spec": spec})
    sim = simulate_cl(params.closed_loop, ds)
    ds.outputs = {name: sim[i] for i, name in enumerate(CL_OUTPUTS)}
    return ds


def make_ol_dataset(params: md.ModelParams, spec: ManeuverSpec,
                    rng: np.random.Generator | None = None) -> Dataset:
    """Open-loop structure dataset with self-consistent outputs."""
    t, chans = _full_model_run(params, spec, rng)
    inputs = {name: chans[name] for name in OL_INPUTS}
    seed_outputs = {name: chans[name] for name in OL_OUTPUTS}
    ds = Dataset(structure="ol", t=t, inputs=inputs, outputs=seed_outputs,
                 meta={"spec": spec})
    sim = simulate_ol(params.open_loop, ds, params.constants)
    ds.outputs = {name: sim[i] for i, name in enumerate(OL_OUTPUTS)}
    return ds


def make_static_dataset(params: md.ModelParams, v_points=None, gamma_points=None,
                        hold_time: float = 1.0, sample_rate: float = 40.0) -> Dataset:
    """Quasi-static trim sweep across airspeed and flight path angle.

    Each grid point contributes a held segment at exact trim, so body rates
    are identically zero and the force curves are sampled cleanly.
    """
    v_points = v_points if v_points is not None else np.linspace(11.0, 18.0, 8)
    # steep descents at low speed need negative thrust; keep the grid feasible
    gamma_points = gamma_points if gamma_points is not None \
        else np.radians([-3.0, 0.0, 3.0, 6.0])
    per = int(round(hold_time * sample_rate))
    chans = {name: [] for name in ("v_a", "gamma", "theta", "u_t", "a_x", "a_z",
                                   "p", "q", "r", "phi")}
    for v in v_points:
        for gam in gamma_points:
            trim = md.solve_trim(params, float(v), float(gam))
            state = trim.state()
            a_x, a_z = md.body_accelerations(state, params.open_loop, params.constants)
            for _ in range(per):
                chans["v_a"].append(v)
                chans["gamma"].append(gam)
                chans["theta"].append(trim.theta)
                chans["u_t"].append(trim.u_t)
                chans["a_x"].append(a_x)
                chans["a_z"].append(a_z)
                chans["p"].append(0.0)
                chans["q"].append(0.0)
                chans["r"].append(0.0)
                chans["phi"].append(0.0)
    n = len(chans["v_a"])
    t = np.arange(n) / sample_rate
    arrays = {k: np.array(v) for k, v in chans.items()}
    inputs = {k: arrays[k] for k in ("theta", "u_t", "phi")}
    outputs = {k: arrays[k] for k in ("v_a", "gamma", "a_x", "a_z", "p", "q", "r")}
    return Dataset(structure="static", t=t, inputs=inputs, outputs=outputs)


def make_freeform_dataset(params: md.ModelParams, duration: float = 70.0,
                          seed: int = 0) -> Dataset:
    """Hold-out full-model run under smooth pseudo-random references."""
    spec = ManeuverSpec(kind="freeform", v_a=13.5, gamma=0.0,
                        channels=("u_t", "phi_ref", "theta_ref"),
                        amplitude={"u_t": 0.18, "phi_ref": np.radians(22.0),
                                   "theta_ref": np.radians(5.0)},
                        duration=duration, settle_time=1.0)
    t, chans = _full_model_run(params, spec, np.random.default_rng(seed))
    return Dataset(structure="full", t=t,
                   inputs={name: chans[name] for name in FULL_INPUTS},
                   outputs={name: chans[name] for name in FULL_OUTPUTS})


def add_output_noise(dataset: Dataset, sigmas: dict | None = None,
                     seed: int = 0) -> Dataset:
    """Additive Gaussian measurement noise on the output channels."""
    table = dict(DEFAULT_CHANNEL_WEIGHTS)
    if sigmas:
        table.update(sigmas)
    rng = np.random.default_rng(seed)
    noisy = {}
    for name, arr in dataset.outputs.items():
        sigma = table.get(name, 0.0)
        noisy[name] = np.asarray(arr, dtype=float) + sigma * rng.standard_normal(arr.shape)
    return Dataset(structure=dataset.structure, t=dataset.t.copy(),
                   inputs={k: np.asarray(v, dtype=float).copy()
                           for k, v in dataset.inputs.items()},
                   outputs=noisy, meta=dict(dataset.meta))


def perturb_params(params, fraction: float = 0.2, seed: int = 0):
    """Multiplicative uniform perturbation for estimator initialization."""
    vec = params.as_array() if hasattr(params, "as_array") else np.asarray(params, float)
    rng = np.random.default_rng(seed)
    factors = 1.0 + rng.uniform(-fraction, fraction, vec.shape)
    return vec * factors


def standard_cl_specs() -> list:
    """Default attitude-response excitation suite across the speed envelope."""
    return [
        ManeuverSpec(v_a=12.0, channels=("phi_ref",), amplitude=np.radians(20.0),
                     duration=14.0),
        ManeuverSpec(v_a=13.5, channels=("theta_ref",), amplitude=np.radians(7.0),
                     duration=14.0),
        ManeuverSpec(v_a=16.0, channels=("phi_ref", "theta_ref"),
                     amplitude={"phi_ref": np.radians(15.0),
                                "theta_ref": np.radians(5.0)}, duration=14.0),
        ManeuverSpec(v_a=14.5, channels=("phi_ref",), amplitude=np.radians(18.0),
                     base_width=0.6, duration=12.0),
    ]


def standard_ol_specs() -> list:
    """Default velocity-axis excitation suite: throttle and pitch steps."""
    return [
        ManeuverSpec(v_a=12.0, channels=("u_t",), amplitude=0.28, duration=14.0),
        ManeuverSpec(v_a=13.5, channels=("theta_ref",), amplitude=np.radians(7.0),
                     duration=14.0),
        ManeuverSpec(v_a=16.0, channels=("u_t", "theta_ref"),
                     amplitude={"u_t": 0.3, "theta_ref": np.radians(5.0)},
                     duration=14.0),
        ManeuverSpec(v_a=13.5, gamma=np.radians(4.0), channels=("u_t",),
                     amplitude=0.3, duration=14.0),
    ]


def static_to_ol_dataset(params: md.ModelParams, static: Dataset) -> Dataset:
    """Convert a quasi-static sweep into an open-loop structure dataset with
    self-consistent outputs (trim holds double as throttle/alpha coverage)."""
    ds = Dataset(structure="ol", t=static.t,
                 inputs={name: np.asarray({**static.inputs, **static.outputs}[name],
                                          dtype=float)
                         for name in OL_INPUTS},
                 outputs={name: np.asarray({**static.inputs, **static.outputs}[name],
                                           dtype=float)
                          for name in OL_OUTPUTS})
    sim = simulate_ol(params.open_loop, ds, params.constants)
    ds.outputs = {name: sim[i] for i, name in enumerate(OL_OUTPUTS)}
    return ds


def make_training_sets(params: md.ModelParams, structure: str) -> list:
    """Self-consistent synthetic training sets for one structure.

    The open-loop suite includes the quasi-static trim sweep, which carries
    most of the information about the force-curve shapes.
    """
    if structure == "cl":
        return [make_cl_dataset(params, spec) for spec in standard_cl_specs()]
    if structure == "ol":
        sets = [make_ol_dataset(params, spec) for spec in standard_ol_specs()]
        sets.append(static_to_ol_dataset(
            params, make_static_dataset(params, hold_time=0.25)))
        return sets
    raise ValueError(f"unknown structure {structure!r}")


# a parameter counts as identifiable at the configured noise level when its
# Gauss-Newton relative standard error stays below this bound
IDENTIFIABLE_REL_STD = 0.025


def identifiable_mask(report: FitReport,
                      threshold: float = IDENTIFIABLE_REL_STD) -> np.ndarray:
    """Boolean mask of parameters whose confidence interval is tight enough
    to hold them to a recovery tolerance."""
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = report.param_std / np.abs(report.params)
    return np.isfinite(rel) & (rel <= threshold)


def open_loop_replay(params: md.ModelParams, dataset: Dataset) -> dict:
    """Replay the combined model over a full-channel dataset, feeding only
    references and throttle; per-channel RMSE against the recorded outputs."""
    if dataset.structure != "full":
        raise SysidError("replay requires a full-channel dataset")
    t = dataset.t
    n = t.size
    h = dataset.dt
    wind = md.WindVector()
    state = np.zeros(md.STATE_DIM)
    state[md.IDX_VA] = dataset.outputs["v_a"][0]
    state[md.IDX_GAMMA] = dataset.outputs["gamma"][0]
    state[md.IDX_PHI] = dataset.outputs["phi"][0]
    state[md.IDX_THETA] = dataset.outputs["theta"][0]
    state[md.IDX_P] = dataset.outputs["p"][0]
    state[md.IDX_Q] = dataset.outputs["q"][0]
    state[md.IDX_R] = dataset.outputs["r"][0]
    state[md.IDX_DELTA_T] = dataset.inputs["u_t"][0]

    sim = {name: np.empty(n) for name in FULL_OUTPUTS}
    for k in range(n):
        sim["phi"][k] = state[md.IDX_PHI]
        sim["theta"][k] = state[md.IDX_THETA]
        sim["p"][k] = state[md.IDX_P]
        sim["q"][k] = state[md.IDX_Q]
        sim["r"][k] = state[md.IDX_R]
        sim["v_a"][k] = state[md.IDX_VA]
        sim["gamma"][k] = state[md.IDX_GAMMA]
        a_x, a_z = md.body_accelerations_array(state, params.open_loop, params.constants)
        sim["a_x"][k], sim["a_z"][k] = a_x, a_z
        if k < n - 1:
            u_now = np.array([dataset.inputs["u_t"][k], dataset.inputs["phi_ref"][k],
                              dataset.inputs["theta_ref"][k]])
            state = md.rk4_step_array(state, u_now, wind, params, h)
    rmse = {}
    for name in FULL_OUTPUTS:
        err = sim[name] - np.asarray(dataset.outputs[name], dtype=float)
        rmse[name] = float(np.sqrt(np.mean(err ** 2)))
    finite = all(np.all(np.isfinite(sim[name])) for name in FULL_OUTPUTS)
    return {"rmse": rmse, "bounded": finite and rmse["v_a"] < 5.0
            and rmse["phi"] < np.radians(30.0)}


# ---------------------------------------------------------------------------
# CSV round trip and report formatting.
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, path) -> None:
    """CSV with declared header: time plus input and output channel names."""
    in_names = sorted(dataset.inputs)
    out_names = sorted(dataset.outputs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"structure={dataset.structure}"])
        writer.writerow(["time"] + [f"in:{n}" for n in in_names]
                        + [f"out:{n}" for n in out_names])
        for i in range(dataset.t.size):
            row = [format(dataset.t[i], ".17g")]
            row += [format(float(dataset.inputs[n][i]), ".17g") for n in in_names]
            row += [format(float(dataset.outputs[n][i]), ".17g") for n in out_names]
            writer.writerow(row)


def load_dataset(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        tag = next(reader)
        if len(tag) != 1 or not tag[0].startswith("structure="):
            raise SysidError(f"{path}: missing structure tag line")
        structure = tag[0].split("=", 1)[1]
        header = next(reader)
        if header[0] != "time":
            raise SysidError(f"{path}: first column must be time")
        data = np.array([[float(v) for v in row] for row in reader])
    t = data[:, 0]
    inputs, outputs = {}, {}
    for j, name in enumerate(header[1:], start=1):
        if name.startswith("in:"):
            inputs[name[3:]] = data[:, j]
        elif name.startswith("out:"):
            outputs[name[4:]] = data[:, j]
        else:
            raise SysidError(f"{path}: channel {name!r} lacks in:/out: prefix")
    return Dataset(structure=structure, t=t, inputs=inputs, outputs=outputs)


def report_text(report: FitReport) -> str:
    """Structured text rendering of a fit report."""
    lines = [
        f"structure: {report.structure}",
        f"converged: {report.converged} ({report.message})",
        f"iterations: {report.n_iter}",
        f"cost: {report.cost:.6e}",
        "",
        f"{'parameter':<12} {'estimate':>14} {'initial':>14} {'std':>12} {'rel std':>9}",
    ]
    for i, name in enumerate(report.param_names):
        rel = report.param_std[i] / abs(report.params[i]) \
            if report.params[i] != 0 else float("inf")
        lines.append(f"{name:<12} {report.params[i]:>14.6g} "
                     f"{report.init_params[i]:>14.6g} {report.param_std[i]:>12.3g} "
                     f"{rel:>9.2%}")
    lines.append("")
    lines.append("validation RMSE per output:")
    for name, val in report.per_output_rmse.items():
        lines.append(f"  {name:<8} {val:.6g}")
    return "\n".join(lines) + "\n"
