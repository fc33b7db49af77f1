"""Joint production, pricing and shipment benchmark (two-stage, nonsmooth).

First stage picks a production budget x and a price p subject to
x >= 1, p in [1, 10] and x <= slope0*p + intercept0.  The second stage sees
random store demand curves slope_j(xi)*p + intercept_j(xi) and chooses
production y_i >= 1 and shipments z_ij >= 0 to minimize

    c2.y + sum_ij (s_ij - p) z_ij
    s.t. sum_i z_ij <= slope_j(xi)*p + intercept_j(xi)   (demand)
         sum_j z_ij <= y_i                               (capacity)

The sampled total objective is (c1 - p)*x + R(p, xi) with R the second-stage
optimum; its subgradient over (x, p) combines the smooth first-stage part
with the LP value function's derivative in p (envelope theorem: the explicit
-z terms of the objective plus the demand duals times the rhs slopes).

Scenario coordinates are truncated normals on the stated intervals with
mean = midpoint and sigma = width/4 (the distribution's center and spread
are an assumption; the source data only names the intervals).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import lp
from ..model import ConstrainedStochasticProblem
from ..qp import BoxPolyhedron

#: rejection-sampling fallbacks taken so far (cap hit, midpoint used)
TRUNCNORM_FALLBACKS = 0
_MAX_REJECTION_ROUNDS = 10 ** 4

#: weak-convexity modulus estimate used for this benchmark's runs; together
#: with eta_alpha = 1.5 it makes the reference curvature alpha0 = 15 admissible
DEFAULT_RHO = 10.0


@dataclass(frozen=True)
class PpsInstance:
    factories: int
    stores: int
    first_stage_cost: float
    production_costs: np.ndarray
    shipment_costs: np.ndarray
    demand_slope0: float
    demand_intercept0: float
    slope_intervals: np.ndarray
    intercept_intervals: np.ndarray
    price_bounds: tuple = (1.0, 10.0)
    quantity_floor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "production_costs",
                           np.asarray(self.production_costs, dtype=float))
        object.__setattr__(self, "shipment_costs",
                           np.asarray(self.shipment_costs, dtype=float))
        object.__setattr__(self, "slope_intervals",
                           np.asarray(self.slope_intervals, dtype=float))
        object.__setattr__(self, "intercept_intervals",
                           np.asarray(self.intercept_intervals, dtype=float))
        if self.factories < 1 or self.stores < 1:
            raise ValueError("needs at least one factory and one store")
        if self.production_costs.shape != (self.factories,):
            raise ValueError("production_costs must have one entry per factory")
        if self.shipment_costs.shape != (self.factories, self.stores):
            raise ValueError("shipment_costs must be factories x stores")
        if np.any(self.slope_intervals >= 0):
            raise ValueError("slope intervals must be strictly negative")
        if np.any(self.intercept_intervals <= 0):
            raise ValueError("intercept intervals must be positive")


@dataclass(frozen=True)
class PpsScenario:
    slopes: np.ndarray
    intercepts: np.ndarray


def build_pps_instance() -> PpsInstance:
    """The five-factory five-store instance with the reference data."""
    return PpsInstance(
        factories=5,
        stores=5,
        first_stage_cost=4.2,
        production_costs=np.array([2.2, 3.2, 3.3, 4.2, 2.4]),
        shipment_costs=np.full((5, 5), 2.0),
        demand_slope0=-1.0,
        demand_intercept0=12.0,
        slope_intervals=np.array([[-1.5, -0.5], [-2.0, -1.0], [-2.5, -1.5],
                                  [-3.0, -2.0], [-2.5, -1.5]]),
        intercept_intervals=np.array([[16.0, 17.0], [21.0, 22.0], [26.0, 27.0],
                                      [31.0, 32.0], [26.0, 27.0]]),
    )


def sample_truncated_normal(interval, stream: np.random.Generator) -> float:
    """One draw from N(midpoint, (width/4)^2) conditioned on [a, b]."""
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    return float(_truncated_normal(stream, np.array([a]), np.array([b]), 1)[0, 0])


def _truncated_normal(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray,
                      count: int) -> np.ndarray:
    """Rejection sampling, vectorized over `count` draws per interval.

    lo/hi have shape (m,); the result has shape (count, m).  Acceptance is
    about 95.4% per attempt (2-sigma window), so a handful of rounds suffice;
    a hard cap falls back to the midpoint and counts the event.
    """
    global TRUNCNORM_FALLBACKS
    mean = 0.5 * (lo + hi)
    sigma = (hi - lo) / 4.0
    out = np.empty((count, lo.size))
    pending = np.ones((count, lo.size), dtype=bool)
    for _ in range(_MAX_REJECTION_ROUNDS):
        if not pending.any():
            return out
        draw = mean + sigma * rng.standard_normal((count, lo.size))
        ok = pending & (draw >= lo) & (draw <= hi)
        out[ok] = draw[ok]
        pending &= ~ok
    TRUNCNORM_FALLBACKS += int(pending.sum())
    out[pending] = np.broadcast_to(mean, out.shape)[pending]
    return out


def scenario_sampler(instance: PpsInstance):
    """Sampler callback: (rng, count) -> list of PpsScenario."""
    slope_lo = instance.slope_intervals[:, 0]
    slope_hi = instance.slope_intervals[:, 1]
    int_lo = instance.intercept_intervals[:, 0]
    int_hi = instance.intercept_intervals[:, 1]

    def sample(rng: np.random.Generator, count: int):
        slopes = _truncated_normal(rng, slope_lo, slope_hi, count)
        intercepts = _truncated_normal(rng, int_lo, int_hi, count)
        return [PpsScenario(slopes=slopes[i], intercepts=intercepts[i])
                for i in range(count)]

    return sample


def first_stage_set(instance: PpsInstance) -> BoxPolyhedron:
    """x >= quantity_floor, p in price_bounds, x <= slope0*p + intercept0."""
    p_lo, p_hi = instance.price_bounds
    # slope0 < 0, so the demand line caps x most loosely at the lowest price
    x_hi = instance.demand_slope0 * p_lo + instance.demand_intercept0
    return BoxPolyhedron(
        lower=np.array([instance.quantity_floor, p_lo]),
        upper=np.array([x_hi, p_hi]),
        ineq_matrix=np.array([[1.0, -instance.demand_slope0]]),
        ineq_rhs=np.array([instance.demand_intercept0]),
    )


def _recourse_rows(instance: PpsInstance) -> np.ndarray:
    """Constraint rows of the recourse LP; independent of price and scenario."""
    m, n = instance.factories, instance.stores
    rows = np.zeros((n + m, m + m * n))
    for j in range(n):
        rows[j, m + j::n] = 1.0            # sum_i z_ij
    for i in range(m):
        rows[n + i, m + i * n: m + (i + 1) * n] = 1.0
        rows[n + i, i] = -1.0              # sum_j z_ij - y_i
    return rows


def second_stage_lp(instance: PpsInstance, p: float, scenario: PpsScenario,
                    rows: np.ndarray = None) -> lp.LpProblem:
    """Assemble the recourse LP at price p; variables are (y, z-flattened)."""
    m, n = instance.factories, instance.stores
    nz = m * n
    cost = np.concatenate([instance.production_costs,
                           (instance.shipment_costs - p).ravel()])
    if rows is None:
        rows = _recourse_rows(instance)
    rhs = np.concatenate([scenario.slopes * p + scenario.intercepts, np.zeros(m)])
    lower = np.concatenate([np.full(m, instance.quantity_floor), np.zeros(nz)])
    upper = np.full(m + nz, np.inf)
    return lp.LpProblem(cost=cost, ineq_matrix=rows, ineq_rhs=rhs,
                        lower=lower, upper=upper)


def pps_oracle(instance: PpsInstance, first_stage, scenario: PpsScenario,
               rows: np.ndarray = None) -> tuple:
    """Sampled total objective and its subgradient over (x, p).

    The p-derivative of the recourse value comes from the envelope theorem:
    the z part of the cost vector has derivative -1 per unit shipped, and the
    demand right-hand sides have derivative slope_j, weighted by their duals.
    """
    x, p = float(first_stage[0]), float(first_stage[1])
    problem = second_stage_lp(instance, p, scenario, rows=rows)
    sol = lp.solve_lp(problem)
    if sol.status is not lp.LpStatus.OPTIMAL:
        raise RuntimeError(f"second-stage LP ended {sol.status.value}")
    m = instance.factories
    total_shipped = float(np.sum(sol.primal[m:]))
    demand_duals = sol.duals[:instance.stores]
    dr_dp = -total_shipped - float(demand_duals @ scenario.slopes)
    value = (instance.first_stage_cost - p) * x + sol.objective
    grad = np.array([instance.first_stage_cost - p, -x + dr_dp])
    return value, grad


def recourse_closed_form(instance: PpsInstance, p: float, slopes: np.ndarray,
                         intercepts: np.ndarray) -> tuple:
    """Vectorized recourse values and d/dp for a batch of scenarios.

    Valid only for uniform shipment costs (the reference data has s_ij = 2):
    with a single margin m = p - s, the optimal policy ships up to capacity
    from the mandatory production floor and tops up at the cheapest factory,
    so the value is piecewise quadratic in p with explicit breakpoints.
    slopes/intercepts have shape (batch, stores); returns two (batch,) arrays.
    """
    ship = float(instance.shipment_costs.flat[0])
    if np.ptp(instance.shipment_costs) != 0.0:
        raise ValueError("closed form requires uniform shipment costs")
    floor_capacity = instance.quantity_floor * instance.factories
    c_min = float(np.min(instance.production_costs))
    base = float(np.sum(instance.production_costs)) * instance.quantity_floor

    demand = slopes * p + intercepts
    if np.any(demand < 0):
        raise ValueError("closed form requires nonnegative demand caps")
    total = demand.sum(axis=1)
    d_total = slopes.sum(axis=1)

    margin = p - ship
    premium = margin - c_min
    shipped = np.minimum(floor_capacity, total)
    extra = np.maximum(total - floor_capacity, 0.0)

    value = base - max(margin, 0.0) * shipped - max(premium, 0.0) * extra
    deriv = np.zeros_like(total)
    if margin > 0:
        deriv -= shipped
        deriv -= margin * np.where(total < floor_capacity, d_total, 0.0)
    if premium > 0:
        deriv -= extra
        deriv -= premium * np.where(total > floor_capacity, d_total, 0.0)
    return value, deriv


def pps_batch_oracle(instance: PpsInstance):
    """Bulk oracle callback: (first_stage, scenarios) -> (mean value, mean grad)."""

    def evaluate(first_stage, scenarios) -> tuple:
        x, p = float(first_stage[0]), float(first_stage[1])
        slopes = np.stack([s.slopes for s in scenarios])
        intercepts = np.stack([s.intercepts for s in scenarios])
        values, derivs = recourse_closed_form(instance, p, slopes, intercepts)
        mean_value = (instance.first_stage_cost - p) * x + float(values.mean())
        grad = np.array([instance.first_stage_cost - p, -x + float(derivs.mean())])
        return mean_value, grad

    return evaluate


def build_pps_problem(instance: PpsInstance = None,
                      rho_estimate: float = DEFAULT_RHO) -> ConstrainedStochasticProblem:
    """Assemble the full stochastic problem around an instance."""
    if instance is None:
        instance = build_pps_instance()
    rows = _recourse_rows(instance)

    def oracle(point, scenario):
        return pps_oracle(instance, point, scenario, rows=rows)

    return ConstrainedStochasticProblem(
        dimension=2,
        scenario_sampler=scenario_sampler(instance),
        oracle=oracle,
        set=first_stage_set(instance),
        rho_estimate=rho_estimate,
        lipschitz_h=0.0,
        batch_oracle=pps_batch_oracle(instance),
    )


#: the reference start point for benchmark runs
X0 = np.array([1.5, 1.5])
