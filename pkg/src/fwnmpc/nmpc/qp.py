"""Dense box-constrained QP via a deterministic primal active-set method.

Solves  min 0.5 x^T H x + g^T x  subject to  lb <= x <= ub  for symmetric
positive-definite H. Starting from a feasible interior point, the working
set only ever holds variable bounds, so every equality-constrained subproblem
reduces to a linear solve on the free variables. Ties in the ratio test and
multiplier selection break toward the lowest index, which makes the iteration
deterministic and cycle-free on these problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_FREE, _LOWER, _UPPER = 0, -1, 1


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    status: str               # "optimal" or "iteration_limit"
    n_iter: int
    n_active: int
    kkt_residual: float


def solve_box_qp(h_mat: np.ndarray, g_vec: np.ndarray, lb: np.ndarray,
                 ub: np.ndarray, x0: np.ndarray | None = None,
                 tol: float = 1e-10, max_iter: int | None = None) -> QpResult:
    """Minimize a strictly convex quadratic over a box."""
    h_mat = np.asarray(h_mat, dtype=float)
    g_vec = np.asarray(g_vec, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = g_vec.shape[0]
    if np.any(lb > ub):
        raise ValueError("inconsistent box bounds")
    if max_iter is None:
        max_iter = 3 * n + 10

    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    state = np.full(n, _FREE, dtype=np.int8)
    state[x <= lb] = _LOWER
    state[x >= ub] = _UPPER
    # degenerate equal-bound variables stay fixed forever
    fixed = lb == ub

    for it in range(1, max_iter + 1):
        free = state == _FREE
        grad = h_mat @ x + g_vec

        if np.any(free):
            idx = np.flatnonzero(free)
            h_ff = h_mat[np.ix_(idx, idx)]
            rhs = -grad[idx]
            try:
                step_f = np.linalg.solve(h_ff, rhs)
            except np.linalg.LinAlgError:
                step_f = np.linalg.lstsq(h_ff, rhs, rcond=None)[0]
            step = np.zeros(n)
            step[idx] = step_f
        else:
            step = np.zeros(n)

        if np.max(np.abs(step), initial=0.0) <= tol:
            # stationary on the working set: check bound multipliers
            lam = np.where(state == _LOWER, grad, np.where(state == _UPPER, -grad, np.inf))
            lam[fixed] = np.inf
            worst = np.flatnonzero(lam < -tol)
            if worst.size == 0:
                kkt = _kkt_residual(grad, state, fixed)
                return QpResult(x=x, status="optimal", n_iter=it,
                                n_active=int(np.count_nonzero(state != _FREE)), kkt_residual=kkt)
            state[worst[0]] = _FREE  # release lowest index (Bland)
            continue

        # ratio test toward the nearest blocking bound
        alpha = 1.0
        blocking = -1
        blocking_side = _FREE
        idx = np.flatnonzero(free)
        for i in idx:
            if step[i] > tol:
                ratio = (ub[i] - x[i]) / step[i]
                side = _UPPER
            elif step[i] < -tol:
                ratio = (lb[i] - x[i]) / step[i]
                side = _LOWER
            else:
                continue
            if ratio < alpha - 1e-15:
                alpha, blocking, blocking_side = ratio, i, side

        x = x + max(alpha, 0.0) * step
        if blocking >= 0:
            state[blocking] = blocking_side
            x[blocking] = ub[blocking] if blocking_side == _UPPER else lb[blocking]
        x = np.clip(x, lb, ub)

    grad = h_mat @ x + g_vec
    return QpResult(x=x, status="iteration_limit", n_iter=max_iter,
                    n_active=int(np.count_nonzero(state != _FREE)),
                    kkt_residual=_kkt_residual(grad, state, fixed))


def _kkt_residual(grad: np.ndarray, state: np.ndarray, fixed: np.ndarray) -> float:
    """Max complementarity/stationarity violation at the current point."""
    free_viol = np.where(state == _FREE, np.abs(grad), 0.0)
    lower_viol = np.where(state == _LOWER, np.maximum(-grad, 0.0), 0.0)
    upper_viol = np.where(state == _UPPER, np.maximum(grad, 0.0), 0.0)
    viol = np.maximum(free_viol, np.maximum(lower_viol, upper_viol))
    viol[fixed] = 0.0
    return float(np.max(viol, initial=0.0))
