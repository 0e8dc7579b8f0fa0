"""Tests for the NMPC layer: outputs, sensitivities, SQP, and controller."""

import numpy as np
import pytest

from fwnmpc import guidance as gd
from fwnmpc import model as md
from fwnmpc import paths as pth
from fwnmpc.nmpc import ocp, solver
from fwnmpc.nmpc.qp import solve_box_qp
from oracles import central_difference_jacobians, random_envelope_states


@pytest.fixture(scope="module")
def params():
    return md.default_params()


@pytest.fixture(scope="module")
def trim(params):
    return md.solve_trim(params, 13.5, 0.0)


@pytest.fixture(scope="module")
def refs(trim):
    return ocp.References.from_trim(trim)


def make_problem(params, refs, queue, wind=md.WindVector(), n_steps=20,
                 weights=None, cfg=None):
    cfg = cfg or ocp.OcpConfig(n_steps=n_steps)
    return solver.AircraftShootingProblem(
        params, cfg, weights or ocp.default_weights(), refs,
        gd.GuidanceConfig(), pth.SwitchConfig(), queue, wind)


def line_queue(d=-50.0):
    seg = pth.LineSegment(b=np.array([5000.0, 0.0, d]), chi_p=0.0, gamma_p=0.0)
    return pth.PathQueue(segments=(seg,))


class TestAlphaSoft:
    CFG = ocp.OcpConfig()

    def test_zero_inside_band(self):
        assert ocp.alpha_soft(np.radians(2.0), self.CFG) == 0.0

    def test_unity_at_hard_bounds(self):
        assert ocp.alpha_soft(self.CFG.alpha_plus, self.CFG) == pytest.approx(1.0, rel=1e-12)
        assert ocp.alpha_soft(self.CFG.alpha_minus, self.CFG) == pytest.approx(1.0, rel=1e-12)

    def test_quarter_midway_in_transition(self):
        assert ocp.alpha_soft(np.radians(7.0), self.CFG) == pytest.approx(0.25, rel=1e-12)

    def test_continuous_at_onsets(self):
        for onset in (self.CFG.alpha_plus - self.CFG.delta_alpha,
                      self.CFG.alpha_minus + self.CFG.delta_alpha):
            eps = 1e-9
            below = ocp.alpha_soft(onset - eps, self.CFG)
            above = ocp.alpha_soft(onset + eps, self.CFG)
            assert abs(above - below) < 1e-12

    def test_vectorized(self):
        vals = ocp.alpha_soft(np.radians([2.0, 7.0, 8.0, -3.0]), self.CFG)
        np.testing.assert_allclose(vals, [0.0, 0.25, 1.0, 1.0], rtol=1e-12)


class TestSensitivities:
    def test_forward_vs_central_on_envelope(self, params):
        """Relative Frobenius error <= 1e-4 over 100 random envelope states."""
        rng = np.random.default_rng(123)
        states = random_envelope_states(rng, 100)
        controls = np.column_stack([
            rng.uniform(0.0, 1.0, 100),
            rng.uniform(-0.5, 0.5, 100),
            rng.uniform(-0.25, 0.25, 100)])
        wind = md.WindVector(1.5, -2.0, 0.3)
        a_all, b_all = ocp.rk4_jacobians(states, controls, wind, params, 0.1)
        for k in range(100):
            a_ref, b_ref = central_difference_jacobians(
                states[k], controls[k], wind, params, 0.1)
            rel_a = np.linalg.norm(a_all[k] - a_ref) / np.linalg.norm(a_ref)
            rel_b = np.linalg.norm(b_all[k] - b_ref) / max(np.linalg.norm(b_ref), 1e-12)
            assert rel_a <= 1e-4
            assert rel_b <= 1e-4

    def test_throttle_lag_closed_form(self, params, trim):
        """The throttle-state row reproduces the first-order-lag transition."""
        dt, tau = 0.1, params.open_loop.tau_t
        states = trim.state().as_array()[None, :]
        controls = trim.control().as_array()[None, :]
        a_mat, b_mat = ocp.rk4_jacobians(states, controls, md.WindVector(), params, dt)
        decay = np.exp(-dt / tau)
        assert a_mat[0, md.IDX_DELTA_T, md.IDX_DELTA_T] == pytest.approx(decay, abs=2e-5)
        assert b_mat[0, md.IDX_DELTA_T, md.IDX_U_T] == pytest.approx(1.0 - decay, abs=2e-5)

    def test_reference_rows_analytic(self, params):
        """Derivative-level control columns match the closed-loop gain symbols."""
        state = md.AircraftState(v_a=14.0, gamma=0.03, phi=0.2, theta=0.1,
                                 p=0.1, q=0.05, r=0.2, delta_t=0.5)
        x, u = state.as_array(), np.array([0.5, 0.1, 0.05])
        wind = md.WindVector()
        h = 1e-7
        cl = params.closed_loop

        def column(j):
            up = u.copy()
            up[j] += h
            return (md.derivative_array(x, up, wind, params)
                    - md.derivative_array(x, u, wind, params)) / h

        col_phi = column(md.IDX_PHI_REF)
        assert col_phi[md.IDX_P] == pytest.approx(cl.l_ephi, rel=1e-6)
        assert col_phi[md.IDX_R] == pytest.approx(cl.n_phiref, rel=1e-6)
        col_theta = column(md.IDX_THETA_REF)
        assert col_theta[md.IDX_Q] == pytest.approx(state.v_a ** 2 * cl.m_etheta, rel=1e-6)

    def test_positions_have_zero_control_columns(self, params):
        state = md.AircraftState(v_a=13.0, delta_t=0.4)
        x, u = state.as_array(), np.array([0.4, 0.0, 0.0])
        wind = md.WindVector()
        for j in range(md.CONTROL_DIM):
            up = u.copy()
            up[j] += 1e-6
            diff = md.derivative_array(x, up, wind, params) \
                - md.derivative_array(x, u, wind, params)
            np.testing.assert_allclose(diff[:3], 0.0, atol=1e-15)


class LinearToyProblem:
    """LQR-reducible shooting problem implementing the solver protocol."""

    def __init__(self, a, b, q, r, p_end, x0_dim=None, n=12, lb=None, ub=None):
        self.a, self.b = a, b
        self.q_sqrt = np.sqrt(q)
        self.r_sqrt = np.sqrt(r)
        self.p_sqrt = np.sqrt(p_end)
        self.n = n
        self.n_x = a.shape[0]
        self.n_u = b.shape[1]
        self.lb = lb if lb is not None else -1e9 * np.ones((n, self.n_u))
        self.ub = ub if ub is not None else 1e9 * np.ones((n, self.n_u))

    def rollout(self, x0, controls):
        states = np.empty((self.n + 1, self.n_x))
        states[0] = x0
        for k in range(self.n):
            states[k + 1] = self.a @ states[k] + self.b @ controls[k]
        return states

    def residuals(self, states, controls):
        parts = []
        for k in range(self.n):
            parts.append(self.q_sqrt * states[k])
            parts.append(self.r_sqrt * controls[k])
        parts.append(self.p_sqrt * states[self.n])
        return np.concatenate(parts)

    def objective(self, residual):
        return float(residual @ residual)

    def dynamics_jacobians(self, states, controls):
        n = self.n
        return (np.repeat(self.a[None], n, axis=0), np.repeat(self.b[None], n, axis=0))

    def residual_jacobians(self, states, controls):
        n = self.n
        c_stage = np.zeros((n, self.n_x + self.n_u, self.n_x))
        d_stage = np.zeros((n, self.n_x + self.n_u, self.n_u))
        c_stage[:, :self.n_x, :] = np.diag(self.q_sqrt)
        d_stage[:, self.n_x:, :] = np.diag(self.r_sqrt)
        return c_stage, d_stage, np.diag(self.p_sqrt)

    def bounds(self):
        return self.lb, self.ub


def toy_sqp_iterate(problem, x0, controls):
    """Drive the generic condensing/QP pipeline for the toy problem.

    Mirrors sqp_iterate's algebra with the toy's exact Jacobians so the
    Riccati comparison isolates the QP/condensing path.
    """
    states = problem.rollout(x0, controls)
    residual = problem.residuals(states, controls)
    obj0 = problem.objective(residual)
    a_mat, b_mat = problem.dynamics_jacobians(states, controls)
    c_stage, d_stage, c_end = problem.residual_jacobians(states, controls)

    n, n_u, n_x = problem.n, problem.n_u, problem.n_x
    n_out = c_stage.shape[1]
    jac = np.zeros((residual.shape[0], n * n_u))
    sens = np.zeros((n_x, n * n_u))
    for k in range(n):
        rows = slice(k * n_out, (k + 1) * n_out)
        if k > 0:
            jac[rows] = c_stage[k] @ sens
        cols = slice(k * n_u, (k + 1) * n_u)
        jac[rows, cols] += d_stage[k]
        sens = a_mat[k] @ sens
        sens[:, cols] += b_mat[k]
    jac[n * n_out:] = c_end @ sens

    h_mat = jac.T @ jac
    h_mat[np.diag_indices_from(h_mat)] += 1e-12
    g_vec = jac.T @ residual
    lb, ub = problem.bounds()
    qp = solve_box_qp(h_mat, g_vec, (lb - controls).ravel(), (ub - controls).ravel())
    controls_new = np.clip(controls + qp.x.reshape(n, n_u), lb, ub)
    states_new = problem.rollout(x0, controls_new)
    return controls_new, states_new, problem.objective(
        problem.residuals(states_new, controls_new)), obj0


def riccati_regulator(a, b, q, r, p_end, x0, n):
    """Finite-horizon discrete LQR oracle via backward Riccati recursion."""
    p = np.diag(p_end).astype(float)
    gains = []
    for _ in range(n):
        btp = b.T @ p
        k_gain = np.linalg.solve(np.diag(r) + btp @ b, btp @ a)
        p = np.diag(q) + a.T @ p @ (a - b @ k_gain)
        gains.append(k_gain)
    gains.reverse()
    x = x0.copy()
    states, controls = [x0.copy()], []
    for k in range(n):
        u = -gains[k] @ x
        x = a @ x + b @ u
        controls.append(u)
        states.append(x.copy())
    return np.array(states), np.array(controls)


class TestSqpOnLinearProblem:
    A = np.array([[1.0, 0.1], [-0.05, 0.97]])
    B = np.array([[0.005], [0.1]])
    Q = np.array([2.0, 0.5])
    R = np.array([0.3])
    P = np.array([4.0, 1.0])

    def test_single_iteration_reaches_riccati_optimum(self):
        problem = LinearToyProblem(self.A, self.B, self.Q, self.R, self.P, n=12)
        x0 = np.array([1.0, -0.5])
        u0 = np.zeros((12, 1))
        u1, states, obj, _ = toy_sqp_iterate(problem, x0, u0)
        exp_states, exp_controls = riccati_regulator(self.A, self.B, self.Q, self.R,
                                                     self.P, x0, 12)
        np.testing.assert_allclose(u1, exp_controls, atol=1e-7)
        np.testing.assert_allclose(states, exp_states, atol=1e-7)

    def test_second_iteration_is_fixed_point(self):
        problem = LinearToyProblem(self.A, self.B, self.Q, self.R, self.P, n=12)
        x0 = np.array([1.0, -0.5])
        u1, _, _, _ = toy_sqp_iterate(problem, x0, np.zeros((12, 1)))
        u2, _, obj2, obj_before = toy_sqp_iterate(problem, x0, u1)
        np.testing.assert_allclose(u2, u1, atol=1e-8)
        assert obj2 <= obj_before + 1e-12

    def test_bound_saturation_matches_clamped_qp_oracle(self):
        """Two-step horizon with a tight input box: exact bound activation."""
        lb, ub = -0.2 * np.ones((2, 1)), 0.2 * np.ones((2, 1))
        problem = LinearToyProblem(self.A, self.B, self.Q, self.R, self.P, n=2,
                                   lb=lb, ub=ub)
        x0 = np.array([4.0, 0.0])
        u1, _, _, _ = toy_sqp_iterate(problem, x0, np.zeros((2, 1)))
        # oracle: dense least-squares over the 2-var box by fine enumeration
        # of the active-set patterns (free/lower/upper per variable)
        import itertools
        states0 = problem.rollout(x0, np.zeros((2, 1)))
        best = None
        for pat in itertools.product((-1, 0, 1), repeat=2):
            u = np.zeros(2)
            free = [i for i, s in enumerate(pat) if s == 0]
            for i, s in enumerate(pat):
                u[i] = lb[i, 0] if s == -1 else (ub[i, 0] if s == 1 else 0.0)

            def total_obj(u_vec):
                um = u_vec.reshape(2, 1)
                st = problem.rollout(x0, um)
                return problem.objective(problem.residuals(st, um))

            if free:
                # quadratic in the free vars: solve by sampled normal equations
                import numpy.polynomial.polynomial as _  # noqa: F401
                h = 1e-4
                grad = np.zeros(len(free))
                hess = np.zeros((len(free), len(free)))
                f0 = total_obj(u)
                for a_i, i in enumerate(free):
                    up, um_ = u.copy(), u.copy()
                    up[i] += h
                    um_[i] -= h
                    grad[a_i] = (total_obj(up) - total_obj(um_)) / (2 * h)
                    hess[a_i, a_i] = (total_obj(up) - 2 * f0 + total_obj(um_)) / h ** 2
                for a_i, i in enumerate(free):
                    for b_i, j in enumerate(free):
                        if b_i <= a_i:
                            continue
                        upp = u.copy()
                        upp[i] += h
                        upp[j] += h
                        hess_ij = (total_obj(upp) - total_obj(u + _unit(2, i) * h)
                                   - total_obj(u + _unit(2, j) * h) + f0) / h ** 2
                        hess[a_i, b_i] = hess[b_i, a_i] = hess_ij
                try:
                    u_free = np.linalg.solve(hess, -grad) + u[free]
                except np.linalg.LinAlgError:
                    continue
                u[free] = u_free
            if np.any(u < lb[:, 0] - 1e-9) or np.any(u > ub[:, 0] + 1e-9):
                continue
            obj = total_obj(u)
            if best is None or obj < best[1]:
                best = (u.copy(), obj)
        np.testing.assert_allclose(u1.ravel(), best[0], atol=1e-6)
        # exact activation, not merely close
        assert u1[0, 0] == lb[0, 0] or u1[0, 0] == ub[0, 0]


def _unit(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


class TestAircraftSqp:
    def test_kkt_point_has_tiny_step(self, params, refs, trim):
        """Iterating to convergence then once more moves less than 1e-8."""
        queue = line_queue()
        problem = make_problem(params, refs, queue, n_steps=12)
        cfg = problem.cfg
        x0 = trim.state(d=-50.0).as_array()
        controls = np.tile([trim.u_t, 0.0, trim.theta_ref], (12, 1))
        horizon = residual = None
        for _ in range(60):
            res = solver.sqp_iterate(problem, x0, controls, horizon=horizon,
                                     residual=residual)
            controls, horizon, residual = res.controls, res.horizon, res.residual
            if res.step_norm < 1e-12:
                break
        final = solver.sqp_iterate(problem, x0, controls, horizon=horizon,
                                   residual=residual)
        assert final.step_norm <= 1e-8

    def test_objective_never_increases(self, params, refs, trim):
        queue = line_queue()
        problem = make_problem(params, refs, queue, n_steps=15)
        x0 = trim.state(e=25.0, d=-45.0).as_array()
        controls = np.tile([trim.u_t, 0.0, trim.theta_ref], (15, 1))
        horizon = residual = None
        for _ in range(12):
            res = solver.sqp_iterate(problem, x0, controls, horizon=horizon,
                                     residual=residual)
            assert res.objective <= res.objective_before * (1 + 1e-12) + 1e-12
            controls, horizon, residual = res.controls, res.horizon, res.residual

    def test_quadratic_cost_identity(self, params, refs, trim):
        """Reported objective equals the weight-matrix quadratic form."""
        queue = line_queue()
        problem = make_problem(params, refs, queue, n_steps=10)
        cfg, weights = problem.cfg, problem.weights
        x0 = trim.state(e=12.0, d=-48.0).as_array()
        controls = np.tile([trim.u_t, 0.05, trim.theta_ref], (10, 1))
        horizon = problem.rollout(x0, controls)
        residual = problem.residuals(horizon, controls)
        reported = problem.objective(residual)

        total = 0.0
        stage_ref = refs.stage_reference()
        for k in range(10):
            raw = ocp.raw_outputs(horizon.states[k][:, None], controls[k][:, None],
                                  horizon.context.select(slice(k, k + 1)),
                                  problem.wind, params, problem.guidance_cfg, cfg)[:, 0]
            err = raw - stage_ref
            err_y, err_z = err[:ocp.N_Y], err[ocp.N_Y:]
            total += float(err_y @ np.diag(weights.q_y / weights.y_scale ** 2) @ err_y
                           + err_z @ np.diag(weights.r_z / weights.z_scale ** 2) @ err_z) \
                * cfg.t_step
        raw_end = ocp.raw_outputs(horizon.states[-1][:, None], np.zeros((3, 1)),
                                  horizon.context.select(slice(10, 11)),
                                  problem.wind, params, problem.guidance_cfg, cfg)[:ocp.N_Y, 0]
        err_end = raw_end - refs.end_reference()
        total += float(err_end @ np.diag(weights.p_end / weights.y_scale ** 2) @ err_end)
        assert reported == pytest.approx(total, rel=1e-12)

    def test_roll_saturates_exactly_at_bound(self, params, refs, trim):
        """A far-off path demands more than 30 deg roll; the command pins there."""
        cfg = ocp.OcpConfig(n_steps=25, cold_start_sqp_iter=6)
        seg = pth.LineSegment(b=np.array([0.0, 5000.0, -50.0]), chi_p=np.pi / 2,
                              gamma_p=0.0)
        queue = pth.PathQueue(segments=(seg,))
        ctrl = solver.NmpcController(params, cfg, ocp.default_weights(), refs)
        state = trim.state(n=0.0, e=0.0, d=-50.0, xi=0.0)  # path demands a hard right
        control, sol = ctrl.step(state, queue, md.WindVector())
        assert np.max(sol.controls[:, 1]) == cfg.phi_ref_max
        assert np.all(sol.controls >= cfg.control_lower() - 0.0)
        assert np.all(sol.controls <= cfg.control_upper() + 0.0)


class TestPropagateHorizon:
    def test_matches_public_switch_functions(self, params, refs, trim):
        """The inlined in-horizon switching equals the public queue advance."""
        segs = (
            pth.LineSegment(b=np.array([60.0, 0.0, -50.0]), chi_p=0.0, gamma_p=0.0),
            pth.ArcSegment(c=np.array([60.0, 40.0, -50.0]), r_signed=40.0,
                           chi_p=np.pi / 2, gamma_p=0.0),
            pth.LoiterSegment(c=np.array([100.0, 80.0, -50.0]), r_signed=40.0),
        )
        queue = pth.PathQueue(segments=segs)
        cfg = ocp.OcpConfig(n_steps=60)
        swcfg = pth.SwitchConfig()
        wind = md.WindVector(0.5, -0.5, 0.0)
        x0 = trim.state(n=20.0, e=0.0, d=-50.0).as_array()
        controls = np.tile([trim.u_t, 0.0, trim.theta_ref], (60, 1))
        horizon = ocp.propagate_horizon(x0, controls, queue, wind, params, cfg, swcfg)

        # replay with the public functions
        q = queue
        x = x0.copy()
        for k in range(cfg.n_steps + 1):
            assert horizon.x_sw[k] == pytest.approx(q.x_sw, abs=1e-12)
            assert horizon.seg_index[k] == q.current_index
            if k == cfg.n_steps:
                break
            v_g = md.kinematics_array(x, wind)
            conds = pth.switching_conditions(q.current_segment, x[:3], v_g, swcfg)
            q = pth.advance_switch_state(q, conds, swcfg, cfg.t_step)
            x = md.rk4_step_array(x, controls[k], wind, params, cfg.t_step)
            np.testing.assert_allclose(horizon.states[k + 1], x, atol=1e-12)

    def test_segment_switch_at_correct_node(self, params, refs, trim):
        """Terminal conditions crossing inside the horizon switch the node index."""
        b_dist = 20.0
        segs = (
            pth.LineSegment(b=np.array([b_dist, 0.0, -50.0]), chi_p=0.0, gamma_p=0.0),
            pth.LineSegment(b=np.array([b_dist, 1000.0, -50.0]), chi_p=np.pi / 2,
                            gamma_p=0.0),
        )
        queue = pth.PathQueue(segments=segs)
        cfg = ocp.OcpConfig(n_steps=40)
        x0 = trim.state(n=0.0, e=0.0, d=-50.0).as_array()
        controls = np.tile([trim.u_t, 0.0, trim.theta_ref], (40, 1))
        swcfg = pth.SwitchConfig()
        horizon = ocp.propagate_horizon(x0, controls, queue, md.WindVector(), params,
                                        cfg, swcfg)
        # the travel condition crosses at ~b_dist / 13.5 m/s; the switching
        # state then needs 1/rho_sw seconds to cross the segment boundary
        first_switch = int(np.argmax(horizon.seg_index > 0))
        crossing = b_dist / 13.5
        expected = int(np.ceil((crossing + 1.0 / swcfg.rho_sw) / cfg.t_step))
        assert abs(first_switch - expected) <= 2

    def test_rejects_bad_control_shape(self, params, refs, trim):
        queue = line_queue()
        cfg = ocp.OcpConfig(n_steps=10)
        with pytest.raises(ValueError):
            ocp.propagate_horizon(trim.state().as_array(), np.zeros((5, 3)), queue,
                                  md.WindVector(), params, cfg, pth.SwitchConfig())

    def test_horizon_config_requires_two_steps(self):
        with pytest.raises(ValueError):
            ocp.OcpConfig(n_steps=0)


class TestController:
    def test_trim_on_path_stays_at_trim(self, params, refs, trim):
        """Repeated calls at trim on the path return the trim control."""
        queue = line_queue()
        cfg = ocp.OcpConfig(n_steps=30)
        ctrl = solver.NmpcController(params, cfg, ocp.default_weights(), refs)
        state = trim.state(d=-50.0)
        for _ in range(4):
            control, sol = ctrl.step(state, queue, md.WindVector())
            assert not sol.degraded
        assert control.u_t == pytest.approx(trim.u_t, abs=5e-3)
        assert control.phi_ref == pytest.approx(0.0, abs=2e-3)
        assert control.theta_ref == pytest.approx(trim.theta_ref, abs=5e-3)

    def test_cold_start_converges_within_three_calls(self, params, refs, trim):
        queue = line_queue()
        cfg = ocp.OcpConfig(n_steps=30)
        ctrl = solver.NmpcController(params, cfg, ocp.default_weights(), refs)
        state = trim.state(e=8.0, d=-50.0)
        objectives = []
        for _ in range(3):
            _, sol = ctrl.step(state, queue, md.WindVector())
            objectives.append(sol.objective)
        # warm shifts perturb the initial guess between calls, so ask for a
        # clean KKT point and an objective matching the cold-start solve
        assert sol.kkt_residual < 1e-6
        assert objectives[-1] <= objectives[0] * 1.02 + 1e-12

    def test_warm_shift_preserves_bounds(self, params, refs, trim):
        queue = line_queue()
        cfg = ocp.OcpConfig(n_steps=20)
        ctrl = solver.NmpcController(params, cfg, ocp.default_weights(), refs)
        state = trim.state(e=40.0, d=-50.0)
        for _ in range(5):
            _, sol = ctrl.step(state, queue, md.WindVector())
            assert np.all(sol.controls >= cfg.control_lower())
            assert np.all(sol.controls <= cfg.control_upper())

    def test_degraded_flag_on_solver_failure(self, params, refs):
        queue = line_queue()
        cfg = ocp.OcpConfig(n_steps=10)
        ctrl = solver.NmpcController(params, cfg, ocp.default_weights(), refs)
        bad_state = md.AircraftState(v_a=13.5, gamma=1.55)  # nearly vertical
        control, sol = ctrl.step(bad_state, queue, md.WindVector())
        assert sol.degraded
        assert control.u_t == pytest.approx(refs.u_t_trim)


class TestThrottleFailureWeight:
    def test_weight_set_to_1e6(self):
        weights = ocp.default_weights()
        failed = solver.apply_throttle_failure_weight(weights)
        assert failed.r_z[ocp.Z_U_T] == 1.0e6

    def test_other_entries_unchanged(self):
        weights = ocp.default_weights()
        failed = solver.apply_throttle_failure_weight(weights)
        np.testing.assert_array_equal(failed.q_y, weights.q_y)
        np.testing.assert_array_equal(failed.p_end, weights.p_end)
        mask = np.arange(ocp.N_Z) != ocp.Z_U_T
        np.testing.assert_array_equal(failed.r_z[mask], weights.r_z[mask])

    def test_restore_round_trip(self):
        weights = ocp.default_weights()
        before = weights.r_z.copy()
        _ = solver.apply_throttle_failure_weight(weights)
        np.testing.assert_array_equal(weights.r_z, before)
