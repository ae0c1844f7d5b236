"""Small dense convex QP solver (primal active set) with KKT verification.

Solves min 1/2 x'Hx + f'x subject to inequality rows a'x >= b, for strictly
convex H and problem sizes of a handful of variables and a couple dozen rows.
Robustness is favored over speed: lowest-index (Bland-style) selection for
both entering and leaving rows avoids cycling, and every returned solution
carries its own KKT residual.

When no feasible starting point is supplied, feasibility is obtained from an
exact-penalty phase-1 problem: one extra slack variable relaxes every row, a
large linear penalty drives the slack to zero, and a positive slack at the
penalized optimum certifies infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_FEAS_TOL = 1e-9
_LAMBDA_TOL = 1e-9
_STEP_TOL = 1e-11


class QpInfeasibleError(RuntimeError):
    """Raised when the constraint rows admit no solution."""


@dataclass
class DenseQp:
    """Strictly convex QP: min 1/2 x'Hx + f'x  s.t.  a_i'x >= b_i per row."""

    H: np.ndarray
    f: np.ndarray
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = self.f.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected ({n}, {n})")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-12 * max(
            1.0, float(np.max(np.abs(self.H)))
        ):
            raise ValueError("H must be symmetric")
        try:
            np.linalg.cholesky(self.H)
        except np.linalg.LinAlgError as exc:
            raise ValueError("H must be positive definite") from exc
        rows = []
        for a, b in self.rows:
            a = np.asarray(a, dtype=float)
            if a.shape != (n,):
                raise ValueError(f"row normal has shape {a.shape}, expected ({n},)")
            rows.append((a, float(b)))
        self.rows = rows

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def k(self) -> int:
        return len(self.rows)

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.rows:
            return np.zeros((0, self.n)), np.zeros(0)
        A = np.stack([a for a, _ in self.rows])
        b = np.array([b for _, b in self.rows])
        return A, b

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass(frozen=True)
class QpSolution:
    """Minimizer with its active rows, multipliers, and KKT residual."""

    x: np.ndarray
    active_set: tuple[int, ...]
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int


def kkt_residual(problem: DenseQp, x: np.ndarray, multipliers: np.ndarray) -> float:
    """Max of stationarity, primal-violation, dual-negativity, and
    complementarity residuals for a candidate point."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.n},)")
    if lam.shape != (problem.k,):
        raise ValueError(f"multipliers have shape {lam.shape}, expected ({problem.k},)")
    A, b = problem.matrices()
    stat = problem.H @ x + problem.f
    if problem.k:
        stat = stat - A.T @ lam
        resid = A @ x - b
        primal = float(np.max(np.maximum(0.0, -resid), initial=0.0))
        dual = float(np.max(np.maximum(0.0, -lam), initial=0.0))
        compl = float(np.max(np.abs(lam * resid), initial=0.0))
    else:
        primal = dual = compl = 0.0
    return max(float(np.max(np.abs(stat), initial=0.0)), primal, dual, compl)


def _equality_step(H: np.ndarray, g: np.ndarray, A_w: np.ndarray):
    """Solve min 1/2 p'Hp + g'p  s.t.  A_w p = 0; return (p, multipliers).

    Multipliers follow the convention Hp + g = A_w' lambda, so nonnegative
    values certify optimality for >= rows.
    """
    n = H.shape[0]
    k = A_w.shape[0]
    if k == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = H
    kkt[:n, n:] = A_w.T
    kkt[n:, :n] = A_w
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(kkt, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:n], -sol[n:]


def _initial_working_set(A: np.ndarray, resid: np.ndarray) -> list[int]:
    """Lowest-index maximal independent subset of the rows active at x0."""
    active = [int(i) for i in np.nonzero(resid <= _FEAS_TOL)[0]]
    chosen: list[int] = []
    for i in active:
        trial = A[chosen + [i]]
        if np.linalg.matrix_rank(trial, tol=1e-10) == len(chosen) + 1:
            chosen.append(i)
    return chosen


def _active_set_iterate(H, f, A, b, x0, max_iter):
    """Primal active-set loop from a feasible x0."""
    x = np.asarray(x0, dtype=float).copy()
    work = _initial_working_set(A, A @ x - b) if A.shape[0] else []
    h_floor = max(float(np.min(np.diag(H))), 1e-12)
    eps = float(np.finfo(float).eps)
    for it in range(1, max_iter + 1):
        g = H @ x + f
        # Zero-step threshold tracks the KKT solve's roundoff, which grows
        # with the gradient magnitude (large in the penalized phase-1 pass).
        zero_tol = max(
            _STEP_TOL * (1.0 + float(np.max(np.abs(x), initial=0.0))),
            1e3 * eps * (1.0 + float(np.max(np.abs(g), initial=0.0))) / h_floor,
        )
        p, lam_w = _equality_step(H, g, A[work] if work else np.zeros((0, len(x))))
        if np.max(np.abs(p), initial=0.0) <= zero_tol:
            if not work:
                return x, work, np.zeros(0), it
            lam = np.asarray(lam_w)
            if np.min(lam) >= -_LAMBDA_TOL:
                return x, work, lam, it
            # Bland: drop the lowest-index row with a negative multiplier.
            drop_pos = min(
                i for i, lv in enumerate(lam) if lv < -_LAMBDA_TOL
            )
            work.pop(drop_pos)
            continue
        alpha = 1.0
        blocker = -1
        if A.shape[0]:
            ap = A @ p
            resid = A @ x - b
            for i in range(A.shape[0]):
                if i in work or ap[i] >= -1e-13:
                    continue
                step = max(0.0, resid[i]) / (-ap[i])
                if step < alpha - 1e-13:
                    alpha = step
                    blocker = i
        x = x + alpha * p
        if blocker >= 0:
            work.append(blocker)
            work.sort()
    raise RuntimeError(f"active-set iteration limit ({max_iter}) exceeded")


def _find_feasible_point(problem: DenseQp) -> np.ndarray:
    """Exact-penalty phase 1: minimize the original objective plus M*t with
    every row relaxed by a slack t >= 0."""
    n = problem.n
    A, b = problem.matrices()
    t0 = max(0.0, float(np.max(b, initial=0.0))) + 1.0
    x0 = np.concatenate([np.zeros(n), [t0]])
    H_aug = np.zeros((n + 1, n + 1))
    H_aug[:n, :n] = problem.H
    H_aug[n, n] = 1.0
    A_aug = np.hstack([A, np.ones((problem.k, 1))])
    A_aug = np.vstack([A_aug, np.concatenate([np.zeros(n), [1.0]])])
    b_aug = np.concatenate([b, [0.0]])
    penalty = 1e4 * (
        1.0 + float(np.max(np.abs(problem.f), initial=0.0)) + float(np.max(np.abs(b), initial=0.0))
    )
    for _ in range(4):
        f_aug = np.concatenate([problem.f, [penalty]])
        z, *_ = _active_set_iterate(
            H_aug, f_aug, A_aug, b_aug, x0, max_iter=100 * (problem.k + n + 2)
        )
        if z[n] <= _FEAS_TOL:
            return z[:n]
        penalty *= 100.0
    raise QpInfeasibleError(
        f"constraints appear infeasible (residual slack {z[n]:.3e})"
    )


def solve_qp(problem: DenseQp, x0: np.ndarray | None = None) -> QpSolution:
    """Globally minimize the QP; returns the solution with KKT certificate.

    An optional feasible x0 skips phase 1.  Raises QpInfeasibleError when the
    rows are inconsistent.
    """
    n = problem.n
    A, b = problem.matrices()
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if problem.k and np.min(A @ x0 - b) < -_FEAS_TOL:
            x0 = None
    if x0 is None:
        if problem.k == 0:
            x0 = np.zeros(n)
        else:
            x0 = _find_feasible_point(problem)
    x, work, lam_w, iters = _active_set_iterate(
        problem.H, problem.f, A, b, x0, max_iter=100 * (problem.k + n + 2)
    )
    lam = np.zeros(problem.k)
    for pos, row in enumerate(work):
        lam[row] = max(0.0, float(lam_w[pos]))
    residual = kkt_residual(problem, x, lam)
    return QpSolution(
        x=x,
        active_set=tuple(work),
        multipliers=lam,
        kkt_residual=residual,
        iterations=iters,
    )
