import itertools
import time

import numpy as np
import pytest

from swarmscan.qp import DenseQp, QpInfeasibleError, kkt_residual, solve_qp


def brute_force_qp(problem: DenseQp):
    """Enumerate all candidate active sets and pick the feasible KKT point.

    Independent oracle: solves every equality-constrained subproblem over row
    subsets of size <= n, filters by primal feasibility and multiplier signs,
    and returns the best objective among the survivors.
    """
    n = problem.n
    A, b = problem.matrices()
    best_x = None
    best_obj = np.inf
    for size in range(0, min(n, problem.k) + 1):
        for combo in itertools.combinations(range(problem.k), size):
            Ac = A[list(combo)]
            kkt = np.zeros((n + size, n + size))
            kkt[:n, :n] = problem.H
            if size:
                kkt[:n, n:] = Ac.T
                kkt[n:, :n] = Ac
            rhs = np.concatenate([-problem.f, b[list(combo)]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            lam = -sol[n:]  # convention: Hx + f = Ac' lam, lam >= 0 at optimum
            if size and np.min(lam) < -1e-9:
                continue
            if problem.k and np.min(A @ x - b) < -1e-9:
                continue
            obj = problem.objective(x)
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_x = x
    return best_x


def random_feasible_qp(rng, n_vars, n_rows):
    """Strictly convex QP guaranteed feasible at a hidden interior point."""
    M = rng.standard_normal((n_vars, n_vars))
    H = M @ M.T + n_vars * np.eye(n_vars)
    f = rng.standard_normal(n_vars) * 2.0
    x_feas = rng.standard_normal(n_vars)
    rows = []
    for _ in range(n_rows):
        a = rng.standard_normal(n_vars)
        slack = rng.uniform(0.0, 2.0)
        rows.append((a, float(a @ x_feas) - slack))
    return DenseQp(H=H, f=f, rows=rows)


class TestBasics:
    def test_unconstrained_identity(self):
        sol = solve_qp(DenseQp(H=2 * np.eye(3), f=np.zeros(3), rows=[]))
        assert np.allclose(sol.x, 0.0)
        assert sol.kkt_residual <= 1e-8

    def test_single_active_bound(self):
        # minimize x^2 subject to x >= 1
        sol = solve_qp(DenseQp(H=np.array([[2.0]]), f=np.zeros(1), rows=[(np.ones(1), 1.0)]))
        assert sol.x[0] == pytest.approx(1.0, abs=1e-10)
        assert sol.active_set == (0,)

    def test_projection_onto_halfspace(self):
        # minimize x^2 + y^2 subject to x + y >= 2
        sol = solve_qp(
            DenseQp(H=2 * np.eye(2), f=np.zeros(2), rows=[(np.array([1.0, 1.0]), 2.0)])
        )
        assert np.allclose(sol.x, [1.0, 1.0], atol=1e-10)

    def test_rejects_asymmetric_h(self):
        with pytest.raises(ValueError):
            DenseQp(H=np.array([[1.0, 0.5], [0.0, 1.0]]), f=np.zeros(2))

    def test_rejects_indefinite_h(self):
        with pytest.raises(ValueError):
            DenseQp(H=np.array([[1.0, 0.0], [0.0, -1.0]]), f=np.zeros(2))

    def test_infeasible_detected(self):
        problem = DenseQp(
            H=2 * np.eye(1),
            f=np.zeros(1),
            rows=[(np.ones(1), 1.0), (-np.ones(1), 0.0)],  # x >= 1 and x <= 0
        )
        with pytest.raises(QpInfeasibleError):
            solve_qp(problem)


class TestKktResidual:
    def test_solver_contract(self):
        rng = np.random.RandomState(0)
        problem = random_feasible_qp(rng, 4, 6)
        sol = solve_qp(problem)
        assert kkt_residual(problem, sol.x, sol.multipliers) <= 1e-8

    def test_perturbed_solution_fails(self):
        rng = np.random.RandomState(1)
        problem = random_feasible_qp(rng, 3, 5)
        sol = solve_qp(problem)
        bad = sol.x + 0.1
        assert kkt_residual(problem, bad, sol.multipliers) > 1e-6

    def test_dimension_mismatch(self):
        problem = DenseQp(H=2 * np.eye(2), f=np.zeros(2), rows=[(np.ones(2), 0.0)])
        with pytest.raises(ValueError):
            kkt_residual(problem, np.zeros(3), np.zeros(1))


class TestOracleEquivalence:
    def test_thousand_random_problems(self):
        rng = np.random.RandomState(2024)
        start = time.monotonic()
        checked = 0
        for trial in range(1000):
            if trial < 950:
                n_vars = rng.randint(2, 6)
                n_rows = rng.randint(2, 9)
            else:
                n_vars = rng.randint(6, 9)
                n_rows = rng.randint(9, 13)
            problem = random_feasible_qp(rng, n_vars, n_rows)
            sol = solve_qp(problem)
            assert sol.kkt_residual <= 1e-8
            oracle = brute_force_qp(problem)
            assert oracle is not None
            assert np.max(np.abs(sol.x - oracle)) <= 1e-6
            checked += 1
        elapsed = time.monotonic() - start
        assert checked == 1000
        assert elapsed < 10.0, f"oracle equivalence took {elapsed:.1f}s"

    def test_determinism(self):
        rng = np.random.RandomState(7)
        problem = random_feasible_qp(rng, 5, 10)
        a = solve_qp(problem)
        b = solve_qp(problem)
        assert np.array_equal(a.x, b.x)
        assert a.active_set == b.active_set
        assert np.array_equal(a.multipliers, b.multipliers)

    def test_warm_start_matches_cold(self):
        rng = np.random.RandomState(8)
        for _ in range(50):
            problem = random_feasible_qp(rng, 4, 8)
            cold = solve_qp(problem)
            A, b = problem.matrices()
            # any strictly feasible point works as a start
            x0 = np.linalg.lstsq(A, b + 1.0, rcond=None)[0]
            if np.min(A @ x0 - b) < 1e-6:
                continue
            warm = solve_qp(problem, x0=x0)
            assert np.max(np.abs(cold.x - warm.x)) <= 1e-6
