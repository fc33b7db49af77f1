"""Scenario batches: seeded draws, aggregation, and sample-size schedules.

Batches are reproducible by construction: the stream for iteration k of a run
is a counter-based generator keyed by a 64-bit mix of (master_seed, k), so
the draw does not depend on history, execution order, or worker count.

Three batch-size schedules are provided: a constant size, a polynomial ramp
ceil(k^exponent), and an adaptive rule that grows the batch exactly when the
sample variance of the subgradients overwhelms the model decrease.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import ConstrainedStochasticProblem

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


class OracleError(RuntimeError):
    """Raised when a per-scenario oracle evaluation fails."""


@dataclass
class SampleStats:
    """Batch mean of values/subgradients plus the spread of the subgradients.

    sum_sq_dev is the unnormalized scatter sum |G_i - mean|^2 over the batch;
    dividing by (batch_size - 1) * batch_size estimates the variance of the
    batch mean, which is what the adaptive test compares against.
    """

    mean_value: float
    mean_subgradient: np.ndarray
    sum_sq_dev: float
    batch_size: int


@dataclass(frozen=True)
class FixedSize:
    size: int

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("batch size must be at least 2")

    def initial_size(self) -> int:
        return self.size


@dataclass(frozen=True)
class PolynomialSize:
    """Deterministic ramp: iteration k draws ceil(k^exponent) scenarios."""

    exponent: float
    cap: int
    floor: int = 2

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")
        if not self.cap >= self.floor >= 2:
            raise ValueError("requires cap >= floor >= 2")

    def initial_size(self) -> int:
        return self.floor


@dataclass(frozen=True)
class AdaptiveSize:
    """Grow the batch when subgradient noise drowns the predicted progress."""

    eta: float
    cap: int
    floor: int = 2

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not self.cap >= self.floor >= 2:
            raise ValueError("requires cap >= floor >= 2")

    def initial_size(self) -> int:
        return self.floor


SamplingStrategy = Union[FixedSize, PolynomialSize, AdaptiveSize]


def _mix64(z: int) -> int:
    """splitmix64 finalizer; full 64-bit avalanche."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def substream_key(master_seed: int, iteration: int) -> int:
    """128-bit key for the (seed, iteration) scenario stream."""
    a = _mix64(master_seed & _MASK64)
    b = _mix64(a ^ _mix64(iteration & _MASK64))
    return (a << 64) | b


def draw_scenarios(sampler, master_seed: int, iteration: int, count: int) -> Sequence:
    """Draw an i.i.d. batch from the substream owned by (master_seed, iteration)."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.Generator(np.random.Philox(key=substream_key(master_seed, iteration)))
    return sampler(rng, count)


def aggregate(problem: ConstrainedStochasticProblem, x: np.ndarray,
              scenarios: Sequence) -> SampleStats:
    """Evaluate the oracle over the batch and reduce in scenario order.

    The reduction order is fixed by scenario index, so the result is
    independent of how the per-scenario evaluations are scheduled.
    """
    n_scen = len(scenarios)
    if n_scen < 2:
        raise ValueError("a batch needs at least 2 scenarios")
    values = np.empty(n_scen)
    grads = np.empty((n_scen, problem.dimension))
    for i, xi in enumerate(scenarios):
        try:
            values[i], grads[i] = problem.oracle(x, xi)
        except Exception as exc:
            raise OracleError(f"oracle failed at scenario index {i}: {exc}") from exc
    mean_grad = grads.mean(axis=0)
    dev = grads - mean_grad
    return SampleStats(
        mean_value=float(values.mean()),
        mean_subgradient=mean_grad,
        sum_sq_dev=float(np.sum(dev * dev)),
        batch_size=n_scen,
    )


def variance_test(stats: SampleStats, alpha: float, step_norm_sq: float,
                  eta: float) -> bool:
    """True when the estimated variance of the batch mean is dominated
    by eta * alpha * |step|^2."""
    n = stats.batch_size
    return stats.sum_sq_dev / ((n - 1) * n) <= eta * alpha * step_norm_sq


def next_sample_size(strategy: SamplingStrategy, stats: SampleStats, alpha: float,
                     step_norm_sq: float, iteration: int) -> int:
    """Batch size for the given (1-based) iteration.

    The adaptive rule solves the variance test for the smallest batch that
    would have passed it with the current scatter, so the size it returns is
    never below the current one when the test just failed.
    """
    if isinstance(strategy, FixedSize):
        return strategy.size
    if isinstance(strategy, PolynomialSize):
        raw = math.ceil(iteration ** strategy.exponent)
        return min(max(raw, strategy.floor), strategy.cap)
    if isinstance(strategy, AdaptiveSize):
        if step_norm_sq == 0.0:
            if stats.sum_sq_dev > 0.0:
                # only exact gradients could pass a zero-step test; take the cap
                logger.warning("adaptive batch: zero step with residual scatter, "
                               "jumping to cap %d", strategy.cap)
            return strategy.cap
        if variance_test(stats, alpha, step_norm_sq, strategy.eta):
            return stats.batch_size
        raw = math.ceil(stats.sum_sq_dev
                        / (strategy.eta * alpha * step_norm_sq * (stats.batch_size - 1)))
        return min(max(raw, strategy.floor), strategy.cap)
    raise TypeError(f"unknown sampling strategy: {strategy!r}")
