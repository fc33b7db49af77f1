"""The two solver loops: full-step proximal SQP and the line-search variant.

run_algorithm1 handles problems whose only constraint is the convex set: it
draws a batch, builds the quadratic model, solves the subproblem over the
translated set and takes the full step.  run_algorithm2 adds smooth equality
constraints: the subproblem linearizes them, an l1 merit line search picks
zeta, and the actual step length is beta = min(nu*zeta, nu*(pi + mu)) where
pi is a computable floor on the acceptable step.

Both record one trace row per iteration and stop on an oracle-call budget,
an iteration cap, or a stall (ten consecutive steps of norm <= 1e-8).  The
stochastic objective estimate is carried in the trace but never used in any
decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .model import (
    ConstrainedStochasticProblem,
    LocalModel,
    merit_value,
    predicted_decrease,
)
from .qp import QpProblem, QpStatus, solve_qp
from .sampling import (
    SamplingStrategy,
    aggregate,
    draw_scenarios,
    next_sample_size,
)

STALL_WINDOW = 10
STALL_TOL = 1e-8
MAX_HALVINGS = 64


@dataclass
class SolverConfig:
    """Run settings shared by both loops.

    nu and mu are per-iteration schedules (1-based); None means the constant
    schedules nu=1, mu=0.  alpha_growth is the per-iteration factor of the
    curvature update; 1.0 keeps alpha constant, larger values grow it
    geometrically up to eta_alpha * rho.
    """

    x0: np.ndarray
    alpha0: float
    strategy: SamplingStrategy
    budget: int
    master_seed: int = 0
    eta_alpha: float = 1.5
    eta_beta: float = 0.5
    gamma: float = 1.0
    theta0: float = 1.0
    nu: Optional[Callable[[int], float]] = None
    mu: Optional[Callable[[int], float]] = None
    max_iterations: int = 10 ** 6
    qp_tol: float = 1e-8
    alpha_growth: float = 1.0

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not self.eta_alpha > 1:
            raise ValueError("eta_alpha must exceed 1")
        if not 0 < self.eta_beta < 1:
            raise ValueError("eta_beta must lie in (0, 1)")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")
        if self.budget < 1:
            raise ValueError("budget must be a positive integer")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if self.alpha_growth < 1:
            raise ValueError("alpha_growth below 1 would shrink alpha")

    def nu_at(self, k: int) -> float:
        return 1.0 if self.nu is None else float(self.nu(k))

    def mu_at(self, k: int) -> float:
        return 0.0 if self.mu is None else float(self.mu(k))


@dataclass
class IterateState:
    """Mutable loop state; x is always a member of the feasible set."""

    x: np.ndarray
    alpha: float
    theta: float
    sample_size: int
    oracle_calls: int = 0
    iteration: int = 0


@dataclass
class StepResult:
    zeta: float
    pi: float
    beta: float
    backtracks: int


@dataclass
class IterationRecord:
    """One row per iteration; x is the iterate AFTER the step of iteration k,
    while objective_estimate and merit are evaluated at the pre-step point
    (they reuse the batch that produced the direction)."""

    k: int
    x: np.ndarray
    step_norm: float
    pred_decrease: float
    zeta: float
    beta: float
    alpha: float
    theta: float
    batch_size: int
    oracle_calls: int
    merit: float
    objective_estimate: float
    stationarity: float = math.nan
    # extra fields for tests and diagnostics, not part of the CSV contract
    direction: np.ndarray = None
    eq_multipliers: np.ndarray = None
    pi: float = 1.0
    backtracks: int = 0
    sum_sq_dev: float = 0.0


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""
    problem: ConstrainedStochasticProblem = None
    config: SolverConfig = None

    @property
    def final_x(self) -> np.ndarray:
        return self.records[-1].x if self.records else self.config.x0

    @property
    def oracle_calls(self) -> int:
        return self.records[-1].oracle_calls if self.records else 0


def update_theta(theta_prev: float, lam: np.ndarray, gamma: float) -> float:
    """Penalty update: never decreases, always dominates |lam|_inf + gamma."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    lam_norm = float(np.max(np.abs(lam))) if np.size(lam) else 0.0
    return max(theta_prev, lam_norm + gamma)


def compute_pi(eta_beta: float, alpha: float, h: float, theta: float, m: int) -> float:
    """Step-length floor: the largest power of 1/2 at most eta_beta*alpha/(h*theta*m).

    h = 0 (or m = 0) makes the ratio infinite and the floor is 1.
    """
    if h == 0.0 or m == 0:
        return 1.0
    ratio = eta_beta * alpha / (h * theta * m)
    if ratio >= 1.0:
        return 1.0
    power = math.ceil(math.log2(1.0 / ratio))
    return 0.5 ** power


def line_search(problem: ConstrainedStochasticProblem, x: np.ndarray, d: np.ndarray,
                lam: np.ndarray, theta: float, alpha: float,
                eta_beta: float) -> tuple:
    """Largest zeta in {1, 1/2, 1/4, ...} with acceptable merit-slope decrease.

    The acceptance inequality compares the guaranteed linearized reduction of
    theta*|c|_1 against its actual value at x + zeta*d, with slack
    (eta_beta*alpha/2)*zeta*|d|^2.  Termination within ceil(log2(1/pi)) + 1
    halvings is guaranteed when rho/H estimates are honest; the hard cap of
    64 halvings signals a violated precondition.
    """
    c_x, _ = problem.eq_constraints(x)
    c_norm = float(np.sum(np.abs(c_x)))
    lam_c = abs(float(lam @ c_x))
    d_sq = float(d @ d)
    zeta = 1.0
    for backtracks in range(MAX_HALVINGS + 1):
        c_trial, _ = problem.eq_constraints(x + zeta * d)
        lhs = theta * c_norm - zeta * lam_c
        rhs = theta * float(np.sum(np.abs(c_trial))) - 0.5 * eta_beta * alpha * zeta * d_sq
        if lhs >= rhs:
            return zeta, backtracks
        zeta *= 0.5
    raise RuntimeError(
        "line search exceeded 64 halvings; rho_estimate or lipschitz_h is "
        "likely underestimated for this problem")


def update_alpha(alpha: float, config: SolverConfig, rho: float) -> float:
    """Next curvature in [alpha, eta_alpha * rho]; identity by default."""
    return min(alpha * config.alpha_growth, config.eta_alpha * rho)


def run_algorithm1(problem: ConstrainedStochasticProblem,
                   config: SolverConfig) -> IterationTrace:
    """Full-step loop for problems with no equality constraints."""
    if problem.eq_constraints is not None:
        raise ValueError("problem has equality constraints; use run_algorithm2")
    return _run(problem, config, with_equalities=False)


def run_algorithm2(problem: ConstrainedStochasticProblem,
                   config: SolverConfig) -> IterationTrace:
    """Line-search loop for problems with smooth equality constraints."""
    if problem.eq_constraints is None:
        raise ValueError("problem has no equality constraints; use run_algorithm1")
    return _run(problem, config, with_equalities=True)


def _run(problem, config, with_equalities):
    rho = problem.rho_estimate
    if not rho <= config.alpha0 <= config.eta_alpha * rho + 1e-12:
        raise ValueError(
            f"alpha0 = {config.alpha0} outside [rho, eta_alpha*rho] = "
            f"[{rho}, {config.eta_alpha * rho}]")
    x0 = np.asarray(config.x0, dtype=float)
    if x0.shape != (problem.dimension,):
        raise ValueError("x0 dimension does not match the problem")
    if not problem.set.membership(x0):
        raise ValueError("x0 lies outside the feasible set")

    state = IterateState(x=x0.copy(), alpha=config.alpha0, theta=config.theta0,
                         sample_size=config.strategy.initial_size())
    trace = IterationTrace(problem=problem, config=config)
    # the constraint count enters the step floor; frozen from the start point
    n_eq = len(problem.eq_constraints(x0)[0]) if with_equalities else 0

    while True:
        if state.oracle_calls >= config.budget:
            trace.stop_reason = "budget"
            break
        if state.iteration >= config.max_iterations:
            trace.stop_reason = "max_iterations"
            break
        k = state.iteration + 1

        scenarios = draw_scenarios(problem.scenario_sampler, config.master_seed,
                                   k, state.sample_size)
        stats = aggregate(problem, state.x, scenarios)
        state.oracle_calls += stats.batch_size
        model = LocalModel(value_at_center=stats.mean_value,
                           gradient=stats.mean_subgradient,
                           curvature=state.alpha)

        if with_equalities:
            c_val, jac = problem.eq_constraints(state.x)
        else:
            c_val, jac = None, None
        sub = QpProblem(gradient=model.gradient, curvature=state.alpha,
                        set=problem.set.translate(state.x),
                        eq_jacobian=jac, eq_residual=c_val)
        sol = solve_qp(sub, tol=config.qp_tol)
        if sol.status is QpStatus.INFEASIBLE:
            trace.stop_reason = "subproblem_infeasible"
            break
        if sol.status is not QpStatus.OPTIMAL:
            raise RuntimeError(f"subproblem solve failed at iteration {k}: "
                               f"{sol.status.value}, kkt residual {sol.kkt_residual:.3e}")
        d = sol.step

        if with_equalities:
            state.theta = update_theta(state.theta, sol.eq_multipliers, config.gamma)
            zeta, backtracks = line_search(problem, state.x, d, sol.eq_multipliers,
                                           state.theta, state.alpha, config.eta_beta)
            pi = compute_pi(config.eta_beta, state.alpha, problem.lipschitz_h,
                            state.theta, n_eq)
            nu_k, mu_k = config.nu_at(k), config.mu_at(k)
            step = StepResult(zeta=zeta, pi=pi,
                              beta=min(nu_k * zeta, nu_k * (pi + mu_k)),
                              backtracks=backtracks)
            merit = merit_value(stats.mean_value, c_val, state.theta)
            theta_col = state.theta
        else:
            step = StepResult(zeta=1.0, pi=1.0, beta=1.0, backtracks=0)
            merit = stats.mean_value
            theta_col = 0.0

        state.x = state.x + step.beta * d
        # kill roundoff drift across the box faces; the step itself is feasible
        np.clip(state.x, problem.set.lower, problem.set.upper, out=state.x)
        state.iteration = k

        trace.records.append(IterationRecord(
            k=k, x=state.x.copy(),
            step_norm=float(np.linalg.norm(d)),
            pred_decrease=predicted_decrease(model, d),
            zeta=step.zeta, beta=step.beta, alpha=state.alpha, theta=theta_col,
            batch_size=stats.batch_size, oracle_calls=state.oracle_calls,
            merit=merit, objective_estimate=stats.mean_value,
            direction=d.copy(), eq_multipliers=np.copy(sol.eq_multipliers),
            pi=step.pi, backtracks=step.backtracks, sum_sq_dev=stats.sum_sq_dev,
        ))

        # the adaptive rule sizes the NEXT batch from this iteration's stats
        state.sample_size = next_sample_size(config.strategy, stats, state.alpha,
                                             float(d @ d), k + 1)
        state.alpha = update_alpha(state.alpha, config, rho)

        if len(trace.records) >= STALL_WINDOW:
            recent = trace.records[-STALL_WINDOW:]
            if max(r.step_norm for r in recent) <= STALL_TOL:
                trace.stop_reason = "stall"
                break

    return trace
