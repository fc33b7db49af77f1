"""Subproblem solver tests.

Ground truth for small instances is exhaustive active-set enumeration; the
box-only case additionally has the closed form clip(-g/alpha, lower, upper).
Every optimum is re-certified through the standalone kkt_residual check.
"""

import numpy as np
import pytest

from snsqp.qp import (
    BoxPolyhedron,
    QpProblem,
    QpStatus,
    kkt_residual,
    solve_qp,
)
from snsqp.bench.reference import enumerate_qp


def random_box(rng, n, p=0):
    lower = rng.uniform(-2.0, -0.2, n)
    upper = rng.uniform(0.2, 2.0, n)
    if p == 0:
        return BoxPolyhedron(lower=lower, upper=upper)
    rows = rng.normal(size=(p, n))
    # keep an interior point strictly feasible so the set is never empty
    interior = lower + (upper - lower) * rng.uniform(0.3, 0.7, n)
    rhs = rows @ interior + rng.uniform(0.05, 1.5, p)
    return BoxPolyhedron(lower=lower, upper=upper, ineq_matrix=rows, ineq_rhs=rhs)


class TestBoxOnly:
    def test_matches_clip_formula(self):
        rng = np.random.default_rng(2211)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            box = random_box(rng, n)
            g = rng.normal(scale=3.0, size=n)
            alpha = float(rng.uniform(0.2, 5.0))
            sol = solve_qp(QpProblem(gradient=g, curvature=alpha, set=box))
            assert sol.status is QpStatus.OPTIMAL
            expected = np.clip(-g / alpha, box.lower, box.upper)
            np.testing.assert_allclose(sol.step, expected, atol=1e-9)

    def test_interior_optimum_has_zero_multipliers(self):
        box = BoxPolyhedron(lower=[-10.0, -10.0], upper=[10.0, 10.0])
        sol = solve_qp(QpProblem(gradient=[1.0, -2.0], curvature=2.0, set=box))
        np.testing.assert_allclose(sol.step, [-0.5, 1.0])
        assert np.all(sol.set_multiplier <= 1e-10)
        assert not sol.active_lower.any() and not sol.active_upper.any()


class TestAgainstEnumeration:
    def test_with_inequality_rows(self):
        rng = np.random.default_rng(990)
        for trial in range(80):
            n = int(rng.integers(2, 5))
            p = int(rng.integers(1, 4))
            box = random_box(rng, n, p)
            g = rng.normal(scale=2.0, size=n)
            alpha = float(rng.uniform(0.5, 4.0))
            problem = QpProblem(gradient=g, curvature=alpha, set=box)
            sol = solve_qp(problem)
            assert sol.status is QpStatus.OPTIMAL, f"trial {trial}"
            best_val, best_d = enumerate_qp(problem)
            got = g @ sol.step + 0.5 * alpha * (sol.step @ sol.step)
            assert got <= best_val + 1e-8, f"trial {trial}"
            np.testing.assert_allclose(sol.step, best_d, atol=1e-6,
                                       err_msg=f"trial {trial}")

    def test_with_equality_rows(self):
        rng = np.random.default_rng(412)
        for trial in range(80):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, min(n, 3)))
            box = random_box(rng, n)
            jac = rng.normal(size=(n, m))
            # residual chosen so that an in-box solution exists
            target = box.lower + (box.upper - box.lower) * rng.uniform(0.2, 0.8, n)
            res = -(jac.T @ target)
            g = rng.normal(scale=2.0, size=n)
            alpha = float(rng.uniform(0.5, 4.0))
            problem = QpProblem(gradient=g, curvature=alpha, set=box,
                                eq_jacobian=jac, eq_residual=res)
            sol = solve_qp(problem)
            assert sol.status is QpStatus.OPTIMAL, f"trial {trial}"
            assert np.max(np.abs(problem.eq_residual
                                 + jac.T @ sol.step)) <= 1e-7
            best_val, _ = enumerate_qp(problem)
            got = g @ sol.step + 0.5 * alpha * (sol.step @ sol.step)
            assert got <= best_val + 1e-7, f"trial {trial}"


class TestCertification:
    def test_kkt_residual_small_and_consistent(self):
        rng = np.random.default_rng(5523)
        for _ in range(60):
            n = int(rng.integers(2, 5))
            p = int(rng.integers(0, 3))
            box = random_box(rng, n, p)
            problem = QpProblem(gradient=rng.normal(size=n),
                                curvature=float(rng.uniform(0.5, 3.0)), set=box)
            sol = solve_qp(problem)
            recomputed = kkt_residual(problem, sol)
            assert recomputed <= 1e-6
            assert abs(recomputed - sol.kkt_residual) <= 1e-10

    def test_stationarity_identity_with_equalities(self):
        """g + alpha d + J lam + v = 0 with v in the normal cone."""
        rng = np.random.default_rng(808)
        for _ in range(40):
            n = 4
            box = random_box(rng, n, 2)
            jac = rng.normal(size=(n, 1))
            target = box.lower + (box.upper - box.lower) * 0.5
            problem = QpProblem(gradient=rng.normal(size=n), curvature=1.5,
                                set=box, eq_jacobian=jac,
                                eq_residual=-(jac.T @ target))
            sol = solve_qp(problem)
            assert sol.status is QpStatus.OPTIMAL
            v = np.zeros(n)
            for i in range(n):
                if sol.active_lower[i]:
                    v[i] -= sol.set_multiplier[i]
                if sol.active_upper[i]:
                    v[i] += sol.set_multiplier[i]
            for r in range(box.n_ineq):
                v += sol.set_multiplier[n + r] * box.ineq_matrix[r]
            resid = (problem.gradient + problem.curvature * sol.step
                     + jac @ sol.eq_multipliers + v)
            assert np.max(np.abs(resid)) <= 1e-6
            assert np.min(sol.set_multiplier) >= -1e-12


class TestFeasibilityHandling:
    def test_rows_cut_off_origin(self):
        """Negative row rhs means d=0 is infeasible, forcing a phase-1 start."""
        rng = np.random.default_rng(64)
        for _ in range(40):
            n = 3
            box = BoxPolyhedron(lower=np.full(n, -4.0), upper=np.full(n, 4.0),
                                ineq_matrix=rng.normal(size=(2, n)),
                                ineq_rhs=rng.uniform(-1.5, -0.2, 2))
            problem = QpProblem(gradient=rng.normal(size=n), curvature=1.0,
                                set=box)
            sol = solve_qp(problem)
            assert sol.status is QpStatus.OPTIMAL
            assert box.membership(sol.step, tol=1e-7)
            best_val, _ = enumerate_qp(problem)
            got = problem.gradient @ sol.step + 0.5 * (sol.step @ sol.step)
            assert got <= best_val + 1e-7

    def test_inconsistent_equalities_detected(self):
        # zero jacobian with nonzero residual cannot be linearized away
        box = BoxPolyhedron(lower=[-1.0, -1.0], upper=[1.0, 1.0])
        problem = QpProblem(gradient=[1.0, 1.0], curvature=1.0, set=box,
                            eq_jacobian=np.zeros((2, 1)), eq_residual=[1.0])
        assert solve_qp(problem).status is QpStatus.INFEASIBLE

    def test_equality_out_of_reach_of_box(self):
        box = BoxPolyhedron(lower=[-1.0], upper=[1.0])
        problem = QpProblem(gradient=[0.0], curvature=1.0, set=box,
                            eq_jacobian=[[1.0]], eq_residual=[5.0])
        assert solve_qp(problem).status is QpStatus.INFEASIBLE


class TestSetValidation:
    def test_membership_and_translate(self):
        box = BoxPolyhedron(lower=[0.0, 0.0], upper=[2.0, 2.0],
                            ineq_matrix=[[1.0, 1.0]], ineq_rhs=[3.0])
        assert box.membership(np.array([1.0, 1.0]))
        assert not box.membership(np.array([2.0, 2.0]))   # row violated
        assert not box.membership(np.array([-0.1, 0.0]))
        shifted = box.translate(np.array([1.0, 1.0]))
        np.testing.assert_allclose(shifted.lower, [-1.0, -1.0])
        np.testing.assert_allclose(shifted.upper, [1.0, 1.0])
        np.testing.assert_allclose(shifted.ineq_rhs, [1.0])
        # membership of d=0 in the translated set mirrors membership of x
        assert shifted.membership(np.zeros(2))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            BoxPolyhedron(lower=[0.0], upper=[np.inf])
        with pytest.raises(ValueError):
            BoxPolyhedron(lower=[1.0], upper=[0.0])
        with pytest.raises(ValueError):
            BoxPolyhedron(lower=[0.0, 0.0], upper=[1.0, 1.0],
                          ineq_matrix=[[1.0]], ineq_rhs=[1.0])
        box = BoxPolyhedron(lower=[0.0], upper=[1.0])
        with pytest.raises(ValueError):
            QpProblem(gradient=[1.0], curvature=0.0, set=box)
        with pytest.raises(ValueError):
            QpProblem(gradient=[1.0, 2.0], curvature=1.0, set=box)
        with pytest.raises(ValueError):
            QpProblem(gradient=[1.0], curvature=1.0, set=box,
                      eq_jacobian=[[1.0]])


def test_duplicated_rows_still_solve():
    """Dependent working sets must not break the step computation."""
    box = BoxPolyhedron(lower=[-1.0, -1.0], upper=[1.0, 1.0],
                        ineq_matrix=[[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]],
                        ineq_rhs=[1.0, 1.0, 2.0])
    problem = QpProblem(gradient=[-3.0, -3.0], curvature=1.0, set=box)
    sol = solve_qp(problem)
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(sol.step, [0.5, 0.5], atol=1e-8)
    assert kkt_residual(problem, sol) <= 1e-7


def test_scaling_consistency():
    """Scaling g and alpha by t leaves the minimizer unchanged."""
    rng = np.random.default_rng(17)
    box = random_box(rng, 3, 2)
    g = rng.normal(size=3)
    base = solve_qp(QpProblem(gradient=g, curvature=2.0, set=box))
    for t in (0.5, 3.0, 40.0):
        scaled = solve_qp(QpProblem(gradient=t * g, curvature=t * 2.0, set=box))
        np.testing.assert_allclose(scaled.step, base.step, atol=1e-7)
