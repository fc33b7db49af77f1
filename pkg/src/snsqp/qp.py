"""Strictly convex quadratic subproblems over a compact box-plus-inequality set.

Solves

    min  g.d + (alpha/2) ||d||^2
    s.t. eq_jacobian.T @ d = -eq_residual     (optional linearized equalities)
         d in set                             (translated feasible set)

with a dense primal active-set method, returning the step together with
equality multipliers and the decomposed normal-cone element of the set,
certified by a KKT residual.  Problems here are small (a few dozen
variables); exact active-set identification is preferred over iterative
methods because the multipliers feed merit and stationarity formulas.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOL = 1e-8
#: relative singular-value threshold marking dependent working-set rows
RANK_THRESHOLD = 1e-12
#: phase-1 l1 equality violation above this value means the subproblem is infeasible
PHASE1_VIOLATION_TOL = 1e-6


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class BoxPolyhedron:
    """Compact convex set {x : lower <= x <= upper, ineq_matrix @ x <= ineq_rhs}.

    All bounds must be finite: compactness is what keeps subproblem steps and
    multipliers bounded.  Instances are treated as immutable.
    """

    lower: np.ndarray
    upper: np.ndarray
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must have the same shape")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("box bounds must be finite (compact set)")
        if np.any(self.lower > self.upper):
            raise ValueError("requires lower <= upper componentwise")
        if (self.ineq_matrix is None) != (self.ineq_rhs is None):
            raise ValueError("ineq_matrix and ineq_rhs must be given together")
        if self.ineq_matrix is not None:
            self.ineq_matrix = np.atleast_2d(np.asarray(self.ineq_matrix, dtype=float))
            self.ineq_rhs = np.atleast_1d(np.asarray(self.ineq_rhs, dtype=float))
            if self.ineq_matrix.shape != (self.ineq_rhs.size, self.dim):
                raise ValueError("ineq_matrix must be (p, n) with ineq_rhs of length p")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def n_ineq(self) -> int:
        return 0 if self.ineq_matrix is None else self.ineq_rhs.size

    def membership(self, x, tol: float = 1e-9) -> bool:
        """Whether x lies in the set, within an absolute tolerance."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if self.ineq_matrix is not None:
            if np.any(self.ineq_matrix @ x > self.ineq_rhs + tol):
                return False
        return True

    def translate(self, x) -> "BoxPolyhedron":
        """The set in step coordinates: {d : x + d in self}."""
        x = np.asarray(x, dtype=float)
        rhs = None if self.ineq_rhs is None else self.ineq_rhs - self.ineq_matrix @ x
        return BoxPolyhedron(self.lower - x, self.upper - x, self.ineq_matrix, rhs)


@dataclass
class QpProblem:
    """One subproblem: gradient estimate, scalar curvature, optional equality rows.

    eq_jacobian columns are the constraint gradients (shape n x m); the
    linearized constraints read eq_jacobian.T @ d = -eq_residual.  The set is
    already translated to step coordinates by the caller.
    """

    gradient: np.ndarray
    curvature: float
    set: BoxPolyhedron
    eq_jacobian: np.ndarray | None = None
    eq_residual: np.ndarray | None = None

    def __post_init__(self):
        self.gradient = np.atleast_1d(np.asarray(self.gradient, dtype=float))
        self.curvature = float(self.curvature)
        if self.curvature <= 0.0:
            raise ValueError("curvature must be positive (strict convexity)")
        if self.gradient.size != self.set.dim:
            raise ValueError("gradient dimension does not match the set")
        if (self.eq_jacobian is None) != (self.eq_residual is None):
            raise ValueError("eq_jacobian and eq_residual must be given together")
        if self.eq_jacobian is not None:
            self.eq_jacobian = np.atleast_2d(np.asarray(self.eq_jacobian, dtype=float))
            self.eq_residual = np.atleast_1d(np.asarray(self.eq_residual, dtype=float))
            if self.eq_jacobian.shape != (self.set.dim, self.eq_residual.size):
                raise ValueError("eq_jacobian must be (n, m) with eq_residual of length m")

    @property
    def n_eq(self) -> int:
        return 0 if self.eq_residual is None else self.eq_residual.size


@dataclass
class QpSolution:
    """Step, multipliers and certification for one subproblem.

    set_multiplier holds nonnegative magnitudes: entries 0..n-1 belong to the
    active bound of each coordinate (active_lower/active_upper tell which
    side), entries n..n+p-1 to the inequality rows.  The signed normal-cone
    element is v = sum_i mult_i * (+-e_i) + sum_r mult_{n+r} * ineq_row_r.
    """

    step: np.ndarray
    eq_multipliers: np.ndarray
    set_multiplier: np.ndarray
    active_lower: np.ndarray
    active_upper: np.ndarray
    active_ineq: np.ndarray
    kkt_residual: float
    status: QpStatus
    rank_warning: bool = False
    iterations: int = 0


def _null_space_step(work_rows: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, bool]:
    """Projection of -u onto the null space of the working-set rows.

    Returns the step and whether the rows were rank deficient (dependent
    rows are harmless for the geometry but worth flagging).
    """
    if work_rows.shape[0] == 0:
        return -u, False
    svd_u, sig, vt = np.linalg.svd(work_rows, full_matrices=True)
    cutoff = RANK_THRESHOLD * max(1.0, sig[0] if sig.size else 0.0)
    rank = int(np.sum(sig > cutoff))
    deficient = rank < work_rows.shape[0]
    null_basis = vt[rank:].T
    if null_basis.shape[1] == 0:
        return np.zeros_like(u), deficient
    return -null_basis @ (null_basis.T @ u), deficient


def solve_qp(problem: QpProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> QpSolution:
    """Solve the subproblem with a primal active-set loop.

    Equality rows stay in every working set; bound and inequality rows enter
    on the lowest-index blocking constraint and leave on the most negative
    multiplier.  Infeasibility of the linearized equalities inside the set is
    detected by an l1 phase-1 solve (see _phase1_start).
    """
    box = problem.set
    n, m, p = box.dim, problem.n_eq, box.n_ineq
    if max_iter is None:
        max_iter = 50 * (n + m + p)
    alpha = problem.curvature
    g = problem.gradient

    eq_rows = np.zeros((0, n)) if m == 0 else problem.eq_jacobian.T
    eq_rhs = np.zeros(0) if m == 0 else -problem.eq_residual

    d, infeasible = _starting_point(problem)
    if infeasible:
        return _failed_solution(problem, QpStatus.INFEASIBLE)

    # Working set of bound/inequality constraints, identified by integer ids:
    # 0..n-1 lower bounds, n..2n-1 upper bounds, 2n..2n+p-1 inequality rows.
    active: list[int] = []
    rank_warning = False
    it = 0
    # stationarity-unit scale shared with the final certification
    scale = max(1.0, float(np.linalg.norm(g, ord=np.inf)))
    while True:
        if it > max_iter:
            return _failed_solution(problem, QpStatus.NUMERICAL_FAILURE, rank_warning, it)
        it += 1
        work = np.vstack([eq_rows, _normal_rows(box, active)]) if (m or active) else np.zeros((0, n))
        u = d + g / alpha
        q, deficient = _null_space_step(work, u)
        rank_warning = rank_warning or deficient
        if alpha * np.linalg.norm(q, ord=np.inf) <= 0.25 * tol * scale:
            # minimizer of the current face reached: check multipliers
            rhs = -(g + alpha * d)
            if work.shape[0]:
                mults = np.linalg.lstsq(work.T, rhs, rcond=None)[0]
            else:
                mults = np.zeros(0)
            ineq_mults = mults[m:]
            worst = _most_negative(ineq_mults, tol)
            if worst is None:
                return _assemble_solution(problem, d, mults[:m], active, ineq_mults,
                                          rank_warning, it, tol)
            active.pop(worst)
        else:
            ratio, blocking = _ratio_test(box, active, d, q)
            d = d + min(1.0, ratio) * q
            if blocking is not None and ratio < 1.0:
                active.append(blocking)


def kkt_residual(problem: QpProblem, candidate: QpSolution) -> float:
    """Max of stationarity, primal, dual and complementarity infinity norms.

    Zero for an exact KKT point of the subproblem.
    """
    box = problem.set
    n, p = box.dim, box.n_ineq
    d = np.asarray(candidate.step, dtype=float)
    if d.size != n:
        raise ValueError("candidate step dimension mismatch")
    mult = np.asarray(candidate.set_multiplier, dtype=float)
    if mult.size != n + p:
        raise ValueError("set_multiplier must have length n + p")

    v = np.zeros(n)
    signs = np.where(candidate.active_upper, 1.0, -1.0)
    bound_active = candidate.active_lower | candidate.active_upper
    v += np.where(bound_active, signs * mult[:n], 0.0)
    if p:
        v += box.ineq_matrix.T @ (np.where(candidate.active_ineq, mult[n:], 0.0))

    stat = problem.gradient + problem.curvature * d + v
    if problem.n_eq:
        stat = stat + problem.eq_jacobian @ candidate.eq_multipliers
    stationarity = np.linalg.norm(stat, ord=np.inf)

    primal = max(
        float(np.max(box.lower - d, initial=0.0)),
        float(np.max(d - box.upper, initial=0.0)),
    )
    if p:
        primal = max(primal, float(np.max(box.ineq_matrix @ d - box.ineq_rhs, initial=0.0)))
    if problem.n_eq:
        primal = max(primal, float(np.linalg.norm(problem.eq_jacobian.T @ d + problem.eq_residual,
                                                  ord=np.inf)))

    dual = max(0.0, -float(np.min(mult, initial=0.0)))

    comp = 0.0
    lower_slack = d - box.lower
    upper_slack = box.upper - d
    slack = np.where(candidate.active_upper, upper_slack, lower_slack)
    comp = max(comp, float(np.max(np.abs(np.where(bound_active, mult[:n] * slack, 0.0)),
                                  initial=0.0)))
    # multiplier mass on rows never marked active counts as a complementarity defect
    comp = max(comp, float(np.max(np.abs(np.where(bound_active, 0.0, mult[:n])), initial=0.0)))
    if p:
        ineq_slack = box.ineq_rhs - box.ineq_matrix @ d
        comp = max(comp, float(np.max(np.abs(np.where(candidate.active_ineq,
                                                      mult[n:] * ineq_slack, mult[n:])),
                                      initial=0.0)))
    return max(stationarity, primal, dual, comp)


def _normal_rows(box: BoxPolyhedron, active: list[int]) -> np.ndarray:
    """Outward normals (<= form) for the given active bound/inequality ids."""
    n = box.dim
    rows = np.zeros((len(active), n))
    for j, cid in enumerate(active):
        if cid < n:
            rows[j, cid] = -1.0
        elif cid < 2 * n:
            rows[j, cid - n] = 1.0
        else:
            rows[j] = box.ineq_matrix[cid - 2 * n]
    return rows


def _most_negative(mults: np.ndarray, tol: float) -> int | None:
    """Index of the most negative multiplier (lowest index on ties), or None."""
    if mults.size == 0:
        return None
    cutoff = -10.0 * tol
    worst = None
    worst_val = cutoff
    for j, val in enumerate(mults):
        if val < worst_val:
            worst, worst_val = j, val
    return worst


def _ratio_test(box: BoxPolyhedron, active: list[int], d: np.ndarray,
                q: np.ndarray) -> tuple[float, int | None]:
    """Largest feasible fraction of q, and the lowest-id blocking constraint."""
    n = box.dim
    tiny = 1e-13
    active_set = set(active)
    candidates: list[tuple[float, int]] = []
    for i in range(n):
        if q[i] < -tiny and i not in active_set:
            candidates.append((max(d[i] - box.lower[i], 0.0) / -q[i], i))
        elif q[i] > tiny and (n + i) not in active_set:
            candidates.append((max(box.upper[i] - d[i], 0.0) / q[i], n + i))
    if box.n_ineq:
        row_dir = box.ineq_matrix @ q
        row_slack = box.ineq_rhs - box.ineq_matrix @ d
        for r in range(box.n_ineq):
            cid = 2 * n + r
            if row_dir[r] > tiny and cid not in active_set:
                candidates.append((max(row_slack[r], 0.0) / row_dir[r], cid))
    if not candidates:
        return 1.0, None
    best = min(ratio for ratio, _ in candidates)
    if best >= 1.0:
        return 1.0, None
    blocking = min(cid for ratio, cid in candidates if ratio <= best)
    return best, blocking


def _starting_point(problem: QpProblem) -> tuple[np.ndarray, bool]:
    """Feasible start: d = 0 when possible, else a phase-1 point.

    d = 0 handles the common case of a set translated around a feasible
    iterate (equality residual zero, nonnegative row right-hand sides);
    anything else goes through the phase-1 LP.
    """
    n = problem.set.dim
    eq_ok = (problem.n_eq == 0
             or np.linalg.norm(problem.eq_residual, ord=np.inf) <= 1e-12)
    rows_ok = (problem.set.n_ineq == 0
               or float(np.min(problem.set.ineq_rhs)) >= 0.0)
    box_ok = bool(np.all(problem.set.lower <= 0.0)
                  and np.all(problem.set.upper >= 0.0))
    if eq_ok and rows_ok and box_ok:
        return np.zeros(n), False
    return _phase1_start(problem)


def _phase1_start(problem: QpProblem) -> tuple[np.ndarray, bool]:
    """Minimize the l1 equality violation over the set via an elastic LP.

    Variables (d, u, v) with u, v >= 0 and eq.T d + u - v = -eq_residual;
    the optimal sum u + v is the violation.  Declares infeasibility above
    PHASE1_VIOLATION_TOL.  With no equality rows this degenerates to a pure
    feasibility solve over the set.
    """
    from . import lp

    box = problem.set
    n, m = box.dim, problem.n_eq
    if m:
        et = problem.eq_jacobian.T  # (m, n)
        target = -problem.eq_residual
        big = 10.0 * (np.linalg.norm(problem.eq_residual, 1) + 1.0)
    else:
        et = np.zeros((0, n))
        target = np.zeros(0)
        big = 1.0

    cost = np.concatenate([np.zeros(n), np.ones(2 * m)])
    rows = [np.hstack([et, np.eye(m), -np.eye(m)]),
            np.hstack([-et, -np.eye(m), np.eye(m)])]
    rhs = [target, -target]
    if box.n_ineq:
        rows.append(np.hstack([box.ineq_matrix, np.zeros((box.n_ineq, 2 * m))]))
        rhs.append(box.ineq_rhs)
    lp_problem = lp.LpProblem(
        cost=cost,
        ineq_matrix=np.vstack(rows),
        ineq_rhs=np.concatenate(rhs),
        lower=np.concatenate([box.lower, np.zeros(2 * m)]),
        upper=np.concatenate([box.upper, np.full(2 * m, big)]),
    )
    sol = lp.solve_lp(lp_problem)
    if sol.status is not lp.LpStatus.OPTIMAL or sol.objective > PHASE1_VIOLATION_TOL:
        return np.zeros(n), True
    return sol.primal[:n], False


def _assemble_solution(problem: QpProblem, d: np.ndarray, eq_mults: np.ndarray,
                       active: list[int], ineq_mults: np.ndarray, rank_warning: bool,
                       iterations: int, tol: float) -> QpSolution:
    box = problem.set
    n, p = box.dim, box.n_ineq
    set_multiplier = np.zeros(n + p)
    active_lower = np.zeros(n, dtype=bool)
    active_upper = np.zeros(n, dtype=bool)
    active_ineq = np.zeros(p, dtype=bool)

    # net signed bound multiplier per coordinate: +upper, -lower; a coordinate
    # with both sides active (degenerate box) collapses to the dominant side
    signed_bounds = np.zeros(n)
    for cid, mult in zip(active, ineq_mults):
        if cid < n:
            signed_bounds[cid] -= mult
        elif cid < 2 * n:
            signed_bounds[cid - n] += mult
        else:
            r = cid - 2 * n
            active_ineq[r] = True
            set_multiplier[n + r] += mult
    for i in range(n):
        if signed_bounds[i] > 0.0:
            active_upper[i] = True
            set_multiplier[i] = signed_bounds[i]
        elif signed_bounds[i] < 0.0:
            active_lower[i] = True
            set_multiplier[i] = -signed_bounds[i]
        else:
            # zero multiplier: keep the activity mark if the bound is binding
            for cid in active:
                if cid == i:
                    active_lower[i] = True
                elif cid == n + i:
                    active_upper[i] = True

    solution = QpSolution(
        step=d,
        eq_multipliers=np.asarray(eq_mults, dtype=float),
        set_multiplier=set_multiplier,
        active_lower=active_lower,
        active_upper=active_upper,
        active_ineq=active_ineq,
        kkt_residual=0.0,
        status=QpStatus.OPTIMAL,
        rank_warning=rank_warning,
        iterations=iterations,
    )
    solution.kkt_residual = kkt_residual(problem, solution)
    scale = max(1.0, float(np.linalg.norm(problem.gradient, ord=np.inf)))
    if solution.kkt_residual > tol * scale:
        solution.status = QpStatus.NUMERICAL_FAILURE
    return solution


def _failed_solution(problem: QpProblem, status: QpStatus, rank_warning: bool = False,
                     iterations: int = 0) -> QpSolution:
    n, p = problem.set.dim, problem.set.n_ineq
    return QpSolution(
        step=np.zeros(n),
        eq_multipliers=np.zeros(problem.n_eq),
        set_multiplier=np.zeros(n + p),
        active_lower=np.zeros(n, dtype=bool),
        active_upper=np.zeros(n, dtype=bool),
        active_ineq=np.zeros(p, dtype=bool),
        kkt_residual=np.inf,
        status=status,
        rank_warning=rank_warning,
        iterations=iterations,
    )
