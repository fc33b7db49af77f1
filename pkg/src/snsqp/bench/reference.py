"""Brute-force reference oracles: slow, exhaustive, used to certify solvers.

Nothing here is clever on purpose.  The QP reference enumerates every
combination of active bounds and rows and solves the resulting equality
systems; the LP reference enumerates candidate vertices from every choice of
n active constraints.  Both are exponential and meant for tiny instances.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import quad

from ..lp import LpProblem
from ..qp import QpProblem


def enumerate_qp(problem: QpProblem, tol: float = 1e-9) -> tuple:
    """Globally optimal (objective, step) by active-set enumeration.

    Every coordinate is free, at lower, or at upper; every inequality row is
    active or not; equality rows are always active.  Exponential in size.
    """
    box, g, alpha = problem.set, problem.gradient, problem.curvature
    n = box.dim
    n_rows = box.n_ineq
    eq_jac = problem.eq_jacobian
    best_val, best_d = np.inf, None

    for coord_state in itertools.product((0, 1, 2), repeat=n):
        fixed = {i: box.lower[i] if st == 1 else box.upper[i]
                 for i, st in enumerate(coord_state) if st}
        free = [i for i in range(n) if i not in fixed]
        for k in range(n_rows + 1):
            for act in itertools.combinations(range(n_rows), k):
                d = _solve_kkt_guess(box, g, alpha, fixed, free, act,
                                     eq_jac, problem.eq_residual)
                if d is None or not box.membership(d, tol=tol):
                    continue
                if problem.n_eq and np.max(np.abs(
                        problem.eq_residual + eq_jac.T @ d)) > tol:
                    continue
                val = g @ d + 0.5 * alpha * (d @ d)
                if val < best_val - 1e-14:
                    best_val, best_d = val, d
    return best_val, best_d


def _solve_kkt_guess(box, g, alpha, fixed, free, act, eq_jac, eq_res):
    """Stationary point with the given coordinates fixed and rows/eqs active."""
    n = box.dim
    d = np.zeros(n)
    for i, v in fixed.items():
        d[i] = v

    active_rows = []
    active_rhs = []
    if act:
        active_rows.append(box.ineq_matrix[list(act)])
        active_rhs.append(box.ineq_rhs[list(act)])
    if eq_jac is not None and eq_jac.size:
        active_rows.append(eq_jac.T)
        active_rhs.append(-eq_res)
    if not active_rows:
        for i in free:
            d[i] = -g[i] / alpha
        return d

    rows = np.vstack(active_rows)
    rhs = np.concatenate(active_rhs)
    if fixed:
        fixed_idx = list(fixed)
        rhs = rhs - rows[:, fixed_idx] @ np.array([fixed[i] for i in fixed_idx])
    m, k = len(free), rows.shape[0]
    if m == 0:
        return d if np.max(np.abs(rhs), initial=0.0) <= 1e-9 else None
    kkt = np.zeros((m + k, m + k))
    kkt[:m, :m] = alpha * np.eye(m)
    kkt[:m, m:] = rows[:, free].T
    kkt[m:, :m] = rows[:, free]
    full_rhs = np.concatenate([-g[free], rhs])
    try:
        sol = np.linalg.solve(kkt, full_rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    for pos, i in enumerate(free):
        d[i] = sol[pos]
    return d


def enumerate_lp(problem: LpProblem, tol: float = 1e-9) -> float:
    """Optimal value by vertex enumeration; requires a bounded optimum.

    Candidate active constraints: the inequality rows, the lower bounds, and
    the finite upper bounds.  Every choice of n of them with a nonsingular
    system yields a candidate vertex; infeasible ones are discarded.
    """
    a_mat, b = problem.ineq_matrix, problem.ineq_rhs
    lo, up = problem.lower, problem.upper
    c = problem.cost
    q = problem.n_vars

    normals = [a_mat]
    offsets = [b]
    normals.append(-np.eye(q))
    offsets.append(-lo)
    finite_up = np.flatnonzero(np.isfinite(up))
    if finite_up.size:
        sel = np.eye(q)[finite_up]
        normals.append(sel)
        offsets.append(up[finite_up])
    normals = np.vstack(normals)
    offsets = np.concatenate(offsets)
    total = normals.shape[0]

    combos = np.array(list(itertools.combinations(range(total), q)))
    mats = normals[combos]
    rhs = offsets[combos]
    dets = np.abs(np.linalg.det(mats))
    good = dets > 1e-12
    if not good.any():
        raise ValueError("no nonsingular vertex system found")
    points = np.linalg.solve(mats[good], rhs[good][..., None])[..., 0]

    feasible = (np.all(points @ a_mat.T <= b + tol, axis=1)
                & np.all(points >= lo - tol, axis=1)
                & np.all(points <= up + tol, axis=1))
    if not feasible.any():
        raise ValueError("vertex enumeration found no feasible vertex")
    return float(np.min(points[feasible] @ c))


def finite_difference_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return grad


def truncated_normal_moments(a: float, b: float) -> tuple:
    """(mean, variance) of N(midpoint, (width/4)^2) restricted to [a, b],
    by direct quadrature of the truncated density."""
    mean0 = 0.5 * (a + b)
    sigma = (b - a) / 4.0

    def density(u):
        return math.exp(-0.5 * ((u - mean0) / sigma) ** 2)

    mass, _ = quad(density, a, b)
    mean, _ = quad(lambda u: u * density(u), a, b)
    mean /= mass
    second, _ = quad(lambda u: (u - mean) ** 2 * density(u), a, b)
    return mean, second / mass


def grid_minimum(fn, lower: np.ndarray, upper: np.ndarray, steps: int) -> tuple:
    """(best point, best value) of fn over a regular grid on a box."""
    axes = [np.linspace(lo, hi, steps) for lo, hi in zip(lower, upper)]
    best_x, best_val = None, np.inf
    for point in itertools.product(*axes):
        val = fn(np.array(point))
        if val < best_val:
            best_val, best_x = val, np.array(point)
    return best_x, best_val
