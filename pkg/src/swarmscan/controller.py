"""Per-drone constraint assembly and the velocity QP.

Each control step minimizes a small quadratic cost over the 5-D velocity and
one slack variable, subject to one soft row (objective-decay rate, relaxed by
the slack) and hard rows that keep the drone safe: gimbal-pitch interval,
minimum separation from the closest neighbor, flight-box faces, and the
per-component input box.  Hard-row offsets are gain times the current barrier
value, so a safe state always admits u = 0 and the QP is always feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DroneState, Region, VirtualField
from .importance import ImportanceField
from .partition import PartitionAssignment
from .qp import DenseQp, QpInfeasibleError, solve_qp
from .sensing import SensingParams, score_batch, score_grad_batch


class EmergencyStopError(RuntimeError):
    """Raised when a control step starts from an unsafe state."""

    def __init__(self, drone: int, report: dict):
        self.drone = drone
        self.report = report
        super().__init__(f"drone {drone} unsafe at control time: {report}")


# Barrier values this far below zero are floating-point noise, not violations
# (a drone riding a barrier's zero level sits exactly on the boundary).
_SAFETY_TOL = 1e-9

# Discrete-time stepping lets barriers dip slightly below zero between
# control updates; dips within 5% of a barrier's natural scale are recovered
# by the controller (the rows then push back into the safe set), anything
# deeper is treated as a genuine safety failure.
_DIP_FRACTION = 0.05


@dataclass(frozen=True)
class ControlParams:
    """Gains and limits of the velocity QP.

    gamma is the prescribed objective decay rate; a1..a3 the linear shaping
    gains of the soft/pitch/collision rows, a4 the flight-box gain; epsilon
    weights control effort against slack; d is the minimum pairwise drone
    separation (meters); u_max bounds each velocity component.

    With pitch_barrier_halfrange the pitch barrier's zero level sits exactly
    at the interval ends; the default keeps the wider classical form whose
    leading term is the full interval width squared.
    """

    gamma: float = 0.012
    a1: float = 1.0
    a2: float = 1.0
    a3: float = 1.0
    a4: float = 1.0
    epsilon: float = 0.01
    d: float = 1.0
    theta_v_min: float = math.pi / 3
    theta_v_max: float = math.pi / 2
    u_max: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0)
    pitch_barrier_halfrange: bool = False

    def __post_init__(self):
        for name in ("gamma", "a1", "a2", "a3", "a4", "epsilon", "d"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.theta_v_min < self.theta_v_max:
            raise ValueError("theta_v_min must be below theta_v_max")
        object.__setattr__(self, "u_max", tuple(float(v) for v in self.u_max))
        if len(self.u_max) != 5 or any(v <= 0.0 for v in self.u_max):
            raise ValueError("u_max must be five positive components")


@dataclass
class QpProblem:
    """Assembled per-drone constraint system before conversion to a dense QP.

    The performance row is the only slack-coupled one; hard rows are
    (normal, offset) pairs meaning normal . u + offset >= 0.
    """

    xi1: np.ndarray
    xi2: float
    hard_rows: list[tuple[np.ndarray, float]]
    epsilon: float
    frozen_axes: tuple[int, ...] = ()

    def to_dense(self) -> DenseQp:
        """Dense QP over z = (u_free, w); frozen velocity axes are eliminated."""
        free = [a for a in range(5) if a not in self.frozen_axes]
        nz = len(free) + 1
        H = np.eye(nz) * (2.0 * self.epsilon)
        H[-1, -1] = 2.0
        f = np.zeros(nz)
        rows = []
        a = np.zeros(nz)
        a[: len(free)] = self.xi1[free]
        a[-1] = -1.0
        rows.append((a, -self.xi2))
        for normal, offset in self.hard_rows:
            a = np.zeros(nz)
            a[: len(free)] = normal[free]
            if np.max(np.abs(a), initial=0.0) == 0.0:
                # Row vanished under axis elimination; it must already hold.
                if offset < -_SAFETY_TOL:
                    raise QpInfeasibleError(
                        "frozen axis leaves a violated constraint unfixable"
                    )
                continue
            rows.append((a, -offset))
        return DenseQp(H=H, f=f, rows=rows)


@dataclass(frozen=True)
class ControlResult:
    u: np.ndarray
    w: float
    diagnostics: dict


def sampling_constraint_coeffs(
    i: int,
    drones,
    assignment: PartitionAssignment,
    field: VirtualField,
    phi: np.ndarray,
    delta1: float,
    sensing: SensingParams,
    control: ControlParams,
    h1_row: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Soft-row coefficients (xi1, xi2) of the objective-decay condition.

    xi1 is the pose gradient of the drone's decay contribution; xi2 collects
    the importance-decay drag and the shaped barrier value, so that
    xi1 . u + xi2 >= w encodes the rate condition with linear shaping.
    An already-computed full score row for drone i may be passed to avoid
    recomputation; cells with vanishing score contribute nothing and are
    skipped in the gradient pass.
    """
    cells = assignment.cells_of(i)
    if cells.size == 0:
        return np.zeros(5), 0.0
    state = drones[i].as_array()
    if h1_row is None:
        h_cells = score_batch(
            state, field.positions[cells], field.directions[cells], sensing
        )
    else:
        h_cells = h1_row[cells]
    # Scores this small contribute < 1e-11 to either coefficient.
    live = np.nonzero(h_cells > 1e-14)[0]
    xi1 = np.zeros(5)
    xi2 = -control.a1 * cells.size * control.gamma
    if live.size:
        sub = cells[live]
        h, grad = score_grad_batch(
            state, field.positions[sub], field.directions[sub], sensing
        )
        w = phi[sub]
        xi1 = delta1 * (grad * w[:, None]).sum(axis=0)
        xi2 += float(np.sum(delta1 * h * w * (control.a1 - delta1 * h)))
    return xi1, xi2


def pitch_barrier_value(state: DroneState, control: ControlParams) -> float:
    """Barrier keeping the gimbal pitch inside its interval (>= 0 is safe)."""
    mid = 0.5 * (control.theta_v_min + control.theta_v_max)
    rng = control.theta_v_max - control.theta_v_min
    lead = (0.5 * rng) ** 2 if control.pitch_barrier_halfrange else rng**2
    return lead - (state.theta_v - mid) ** 2


def pitch_constraint_coeffs(
    state: DroneState, control: ControlParams
) -> tuple[np.ndarray, float]:
    """Hard-row coefficients (chi1, chi2) of the gimbal-pitch barrier.

    chi1 is the barrier gradient (only the pitch slot is nonzero) and chi2 the
    shaped barrier value a2 * b.
    """
    mid = 0.5 * (control.theta_v_min + control.theta_v_max)
    chi1 = np.zeros(5)
    chi1[4] = -2.0 * (state.theta_v - mid)
    chi2 = control.a2 * pitch_barrier_value(state, control)
    return chi1, chi2


def collision_barrier_value(i: int, drones, control: ControlParams) -> tuple[float, int]:
    """Squared-distance margin to the closest neighbor and its index."""
    pos = drones[i].position
    best = math.inf
    j_star = -1
    for j, other in enumerate(drones):
        if j == i:
            continue
        dd = float(np.sum((pos - other.position) ** 2))
        if dd < best:
            best = dd
            j_star = j
    return best - control.d**2, j_star


def collision_constraint_coeffs(
    i: int, drones, control: ControlParams
) -> tuple[np.ndarray, float] | None:
    """Hard-row coefficients (rho1, rho2) against the closest neighbor.

    Absent (None) for a single drone.
    """
    if len(drones) < 2:
        return None
    barrier, j_star = collision_barrier_value(i, drones, control)
    rho1 = np.zeros(5)
    rho1[:3] = 2.0 * (drones[i].position - drones[j_star].position)
    rho2 = control.a3 * barrier
    return rho1, rho2


def collision_rows(i: int, drones, control: ControlParams) -> list[tuple[np.ndarray, float]]:
    """One separation row per neighbor (same per-pair coefficients as the
    closest-neighbor row).

    Constraining only the closest neighbor leaves a pair unbraked on one side
    whenever the two members have different nearest drones (ties included),
    which lets near-threshold pairs close at full speed between steps; a row
    per neighbor restores two-sided braking for every pair.
    """
    rows = []
    pos = drones[i].position
    for j, other in enumerate(drones):
        if j == i:
            continue
        offset = pos - other.position
        rho1 = np.zeros(5)
        rho1[:3] = 2.0 * offset
        rho2 = control.a3 * (float(np.sum(offset**2)) - control.d**2)
        rows.append((rho1, rho2))
    return rows


def boundary_constraint_coeffs(
    state: DroneState, flight_region: Region, a4: float
) -> list[tuple[np.ndarray, float]]:
    """Six hard rows, one per flight-box face; offsets are a4 times the
    signed distance to the face (negative when the face is violated)."""
    rows = []
    pos = state.position
    for axis in range(3):
        lo_normal = np.zeros(5)
        lo_normal[axis] = 1.0
        rows.append((lo_normal, a4 * (pos[axis] - flight_region.mins[axis])))
        hi_normal = np.zeros(5)
        hi_normal[axis] = -1.0
        rows.append((hi_normal, a4 * (flight_region.maxs[axis] - pos[axis])))
    return rows


def input_box_rows(control: ControlParams) -> list[tuple[np.ndarray, float]]:
    """Ten rows realizing |u_k| <= u_max_k."""
    rows = []
    for axis in range(5):
        lo = np.zeros(5)
        lo[axis] = 1.0
        rows.append((lo, control.u_max[axis]))
        hi = np.zeros(5)
        hi[axis] = -1.0
        rows.append((hi, control.u_max[axis]))
    return rows


def barrier_report(
    i: int, drones, flight_region: Region, control: ControlParams
) -> dict:
    """Current values of every hard barrier for drone i."""
    state = drones[i]
    report = {"pitch": pitch_barrier_value(state, control)}
    if len(drones) > 1:
        barrier, j_star = collision_barrier_value(i, drones, control)
        report["collision"] = barrier
        report["closest_neighbor"] = j_star
    pos = state.position
    for axis, name in enumerate("xyz"):
        report[f"{name}_min"] = float(pos[axis] - flight_region.mins[axis])
        report[f"{name}_max"] = float(flight_region.maxs[axis] - pos[axis])
    return report


def _barrier_floor(name: str, control: ControlParams) -> float:
    """Deepest tolerable dip for each barrier (its scale times the dip
    fraction): squared separation for collision, the leading pitch term for
    pitch, one meter of box penetration for the flight boundary."""
    if name == "collision":
        scale = control.d**2
    elif name == "pitch":
        rng = control.theta_v_max - control.theta_v_min
        scale = (0.5 * rng) ** 2 if control.pitch_barrier_halfrange else rng**2
    else:
        scale = 1.0
    return -max(_DIP_FRACTION * scale, _SAFETY_TOL)


def assemble_problem(
    i: int,
    drones,
    assignment: PartitionAssignment,
    field: VirtualField,
    importance: ImportanceField,
    sensing: SensingParams,
    control: ControlParams,
    flight_region: Region,
    frozen_axes: tuple[int, ...] = (),
    h1_row: np.ndarray | None = None,
) -> QpProblem:
    xi1, xi2 = sampling_constraint_coeffs(
        i,
        drones,
        assignment,
        field,
        importance.phi,
        importance.delta1,
        sensing,
        control,
        h1_row=h1_row,
    )
    hard = [pitch_constraint_coeffs(drones[i], control)]
    hard.extend(collision_rows(i, drones, control))
    hard.extend(boundary_constraint_coeffs(drones[i], flight_region, control.a4))
    hard.extend(input_box_rows(control))
    return QpProblem(
        xi1=xi1, xi2=xi2, hard_rows=hard, epsilon=control.epsilon, frozen_axes=frozen_axes
    )


def compute_control(
    i: int,
    drones,
    assignment: PartitionAssignment,
    field: VirtualField,
    importance: ImportanceField,
    sensing: SensingParams,
    control: ControlParams,
    flight_region: Region,
    frozen_axes: tuple[int, ...] = (),
    h1_row: np.ndarray | None = None,
) -> ControlResult:
    """Solve drone i's velocity QP from the current snapshot.

    Raises EmergencyStopError when a hard barrier has dipped beyond the
    recoverable discrete-time band; the caller should command zero velocity
    and halt the mission with the report.  Dips inside the band leave the QP
    feasible and the rows steer back into the safe set.
    """
    report = barrier_report(i, drones, flight_region, control)
    for name, value in report.items():
        if name == "closest_neighbor":
            continue
        if value < _barrier_floor(name, control):
            raise EmergencyStopError(i, report)
    problem = assemble_problem(
        i,
        drones,
        assignment,
        field,
        importance,
        sensing,
        control,
        flight_region,
        frozen_axes=frozen_axes,
        h1_row=h1_row,
    )
    dense = problem.to_dense()
    # u = 0 with w at the soft-row residual is always feasible from a safe state.
    z0 = np.zeros(dense.n)
    z0[-1] = min(0.0, problem.xi2)
    solution = solve_qp(dense, x0=z0)
    free = [a for a in range(5) if a not in frozen_axes]
    u = np.zeros(5)
    u[free] = solution.x[: len(free)]
    w = float(solution.x[-1])
    diag = {
        "kkt_residual": solution.kkt_residual,
        "active_rows": len(solution.active_set),
        "iterations": solution.iterations,
        "barriers": report,
    }
    return ControlResult(u=u, w=w, diagnostics=diag)
