"""Closed-loop mission engine: clocked stepping, events, feedback, safety.

Each step, in order: measure the objective, set the feedback gain, decay the
importance weights, (on event steps) emit a reconstruction, quantify its
change against the previous one and apply the importance jump, partition the
field, solve each drone's velocity QP, integrate the kinematics, and
accumulate viewing exposure on the hidden scene.  Everything is deterministic
given the scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import mesh as mesh_mod
from .controller import EmergencyStopError, compute_control
from .geometry import (
    DroneState,
    Region,
    VirtualField,
    discretize_virtual_field,
    wrap_angle,
)
from .importance import (
    ImportanceField,
    decay_step,
    feedback_gain,
    feedback_jump,
    global_objective,
)
from .mesh import FeedbackParams, MeshEvent, parse_mesh
from .metrics import MetricsReport, evaluate
from .partition import assign_from_matrix, score_matrix_for
from .recon import ExposureField, procedural_scene
from .scenario import Scenario


@dataclass
class SimClock:
    """Step counter; simulated time is exactly steps * dt."""

    dt: float
    steps: int = 0

    @property
    def sim_time(self) -> float:
        return self.steps * self.dt


@dataclass(frozen=True)
class StepRecord:
    t: float
    J: float
    states: np.ndarray  # (n, 5) post-step poses
    u: np.ndarray  # (n, 5) commanded velocities
    w: np.ndarray  # (n,) slack values
    min_pair_dist: float
    active_rows: tuple[int, ...]


@dataclass(frozen=True)
class EventRecord:
    event_index: int
    sim_time: float
    h2_max: float
    h2_mean: float
    jump_total: float
    mesh_vertices: int
    mesh_faces: int
    metrics: MetricsReport


@dataclass
class MissionLog:
    steps: list[StepRecord] = dataclass_field(default_factory=list)
    events: list[EventRecord] = dataclass_field(default_factory=list)
    meshes: list[MeshEvent] = dataclass_field(default_factory=list)
    emergency: dict | None = None

    @property
    def final_J(self) -> float:
        return self.steps[-1].J if self.steps else math.nan

    @property
    def final_metrics(self) -> MetricsReport | None:
        return self.events[-1].metrics if self.events else None

    def time_to_objective(self, threshold: float) -> float | None:
        """First logged time with J at or below the threshold."""
        for rec in self.steps:
            if rec.J <= threshold:
                return rec.t
        return None


def lawnmower_waypoints(
    flight_region: Region, altitude: float, spacing: float, speed: float
) -> list[tuple[float, np.ndarray]]:
    """Timed serpentine sweep of the flight box's xy-rectangle.

    Lanes run along x and are spaced along y (floor(width/spacing) + 1 lanes,
    alternating direction); each waypoint carries its nominal arrival time at
    constant speed.  The camera is meant to stay fixed straight down.
    """
    if spacing <= 0.0:
        raise ValueError("lane spacing must be positive")
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    x0, y0 = flight_region.mins[0], flight_region.mins[1]
    x1, y1 = flight_region.maxs[0], flight_region.maxs[1]
    width = y1 - y0
    lanes = int(math.floor(width / spacing + 1e-12)) + 1
    points = []
    for i in range(lanes):
        y = min(y0 + i * spacing, y1)
        if i % 2 == 0:
            points.append((x0, y))
            points.append((x1, y))
        else:
            points.append((x1, y))
            points.append((x0, y))
    waypoints = []
    t = 0.0
    prev = None
    for x, y in points:
        pos = np.array([x, y, altitude])
        if prev is not None:
            t += float(np.linalg.norm(pos - prev)) / speed
        waypoints.append((t, pos))
        prev = pos
    return waypoints


class World:
    """Mutable mission state threaded through the per-step pipeline."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.field: VirtualField = discretize_virtual_field(
            scenario.target_region,
            scenario.theta_h_range,
            scenario.theta_v_range,
            scenario.resolution,
        )
        self.importance = ImportanceField.uniform(
            self.field.m,
            delta1=scenario.delta1,
            delta2_active=scenario.delta2_active,
            j_threshold=scenario.j_threshold,
        )
        if scenario.scene_path:
            with open(scenario.scene_path, "rb") as fh:
                scene = parse_mesh(fh.read())
        else:
            scene = procedural_scene(scenario.target_region, scenario.scene_edge)
        self.exposure = ExposureField(
            scene, scenario.oracle, scenario.seed, scenario.theta_v_range
        )
        core_points, core_grid = mesh_mod.uniform_core_points(
            scenario.target_region, scenario.core_spacing
        )
        self.feedback_params = FeedbackParams(
            core_points=core_points,
            sigma4=scenario.sigma4,
            kappa=scenario.kappa,
            normal_radius=scenario.normal_radius,
            cylinder_radius=scenario.cylinder_radius,
            core_grid=core_grid,
        )
        self.kernel_weights = (
            mesh_mod.precompute_kernel_weights(
                self.field, core_points, scenario.sigma4
            )
            if scenario.feedback_method != "none"
            else None
        )
        self.drones: tuple[DroneState, ...] = scenario.drones
        self.clock = SimClock(dt=scenario.dt)
        self.event_period_steps = max(1, round(scenario.event_period / scenario.dt))
        self.prev_counts = np.zeros(len(core_points), dtype=np.int64)
        self.prev_cloud: np.ndarray | None = None
        self.log = MissionLog()
        self.delta2 = 0.0
        self._waypoints = (
            lawnmower_waypoints(
                scenario.flight_region,
                scenario.lawnmower_altitude,
                scenario.lawnmower_spacing,
                scenario.lawnmower_speed,
            )
            if scenario.baseline == "lawnmower"
            else None
        )
        self._waypoint_idx = 0
        self.baseline_done = False

    # -- helpers -----------------------------------------------------------

    def min_pair_dist(self) -> float:
        n = len(self.drones)
        if n < 2:
            return math.inf
        best = math.inf
        for i in range(n):
            for j in range(i + 1, n):
                best = min(
                    best,
                    float(
                        np.linalg.norm(
                            self.drones[i].position - self.drones[j].position
                        )
                    ),
                )
        return best

    def record_initial(self) -> None:
        n = len(self.drones)
        self.log.steps.append(
            StepRecord(
                t=0.0,
                J=global_objective(self.importance),
                states=np.stack([d.as_array() for d in self.drones]),
                u=np.zeros((n, 5)),
                w=np.zeros(n),
                min_pair_dist=self.min_pair_dist(),
                active_rows=tuple(0 for _ in range(n)),
            )
        )

    def _lawnmower_controls(self) -> np.ndarray:
        scn = self.scenario
        u = np.zeros((len(self.drones), 5))
        tol = max(0.1, scn.lawnmower_speed * scn.dt)
        pos = self.drones[0].position
        while self._waypoint_idx < len(self._waypoints):
            _, target = self._waypoints[self._waypoint_idx]
            offset = target - pos
            dist = float(np.linalg.norm(offset))
            if dist > tol:
                u[0, :3] = scn.lawnmower_speed * offset / dist
                return u
            self._waypoint_idx += 1
        self.baseline_done = True
        return u

    def _emit_event(self) -> None:
        scn = self.scenario
        event_index = self.clock.steps // self.event_period_steps
        new_mesh = self.exposure.emit_reconstruction_event(event_index)
        h2 = np.zeros(self.field.m)
        if scn.feedback_method == "grid":
            counts = mesh_mod.bin_vertices(
                new_mesh, self.feedback_params, scn.target_region
            )
            delta = mesh_mod.grid_delta(counts, self.prev_counts)
            h2 = mesh_mod.h2_grid(
                delta, self.field, self.feedback_params, self.kernel_weights
            )
            self.prev_counts = counts
        elif scn.feedback_method == "m3c2":
            if self.prev_cloud is not None and len(self.prev_cloud) and new_mesh.n_vertices:
                L, valid = mesh_mod.m3c2_distance(
                    self.prev_cloud, new_mesh.vertices, self.feedback_params
                )
                h2 = mesh_mod.h2_m3c2(
                    L, self.field, self.feedback_params, self.kernel_weights, valid
                )
            self.prev_cloud = new_mesh.vertices.copy()
        jump_total = 0.0
        if self.delta2 > 0.0 and np.any(h2 > 0.0):
            before = self.importance.phi.sum()
            self.importance = feedback_jump(self.importance, h2, self.delta2)
            jump_total = float(self.importance.phi.sum() - before) / self.field.m
        report = evaluate(
            new_mesh,
            self.exposure.ground_truth,
            eta=0.05,
            sim_time=self.clock.sim_time,
        )
        self.log.events.append(
            EventRecord(
                event_index=event_index,
                sim_time=self.clock.sim_time,
                h2_max=float(h2.max(initial=0.0)),
                h2_mean=float(h2.mean()) if h2.size else 0.0,
                jump_total=jump_total,
                mesh_vertices=new_mesh.n_vertices,
                mesh_faces=new_mesh.n_faces,
                metrics=report,
            )
        )
        self.log.meshes.append(
            MeshEvent(event_index=event_index, mesh=new_mesh, sim_time=self.clock.sim_time)
        )


def step(world: World) -> World:
    """Advance the mission by one control period."""
    scn = world.scenario
    dt = scn.dt

    # (1) objective, (2) feedback gain from the pre-decay objective
    J = global_objective(world.importance)
    world.delta2 = feedback_gain(J, world.importance)

    # (3) decay against the best current score per cell
    h1 = score_matrix_for(world.drones, world.field, scn.sensing)
    world.importance = decay_step(world.importance, h1.max(axis=0), dt)

    # (4) reconstruction event: emit, quantify change, jump
    if (
        world.clock.steps > 0
        and world.clock.steps % world.event_period_steps == 0
    ):
        world._emit_event()

    # (5) partition, (6) per-drone control
    n = len(world.drones)
    u = np.zeros((n, 5))
    w = np.zeros(n)
    active = []
    if world._waypoints is not None:
        u = world._lawnmower_controls()
        active = [0] * n
    else:
        assignment = assign_from_matrix(h1)
        for i in range(n):
            result = compute_control(
                i,
                world.drones,
                assignment,
                world.field,
                world.importance,
                scn.sensing,
                scn.control,
                scn.flight_region,
                frozen_axes=scn.frozen_axes,
                h1_row=h1[i],
            )
            u[i] = result.u
            w[i] = result.w
            active.append(result.diagnostics["active_rows"])

    # (7) integrate kinematics with yaw wrapping
    moved = []
    for i, d in enumerate(world.drones):
        vec = d.as_array() + u[i] * dt
        moved.append(
            DroneState(vec[0], vec[1], vec[2], wrap_angle(vec[3]), vec[4])
        )
    world.drones = tuple(moved)

    # (8) viewing exposure at the new poses
    world.exposure.accumulate_exposure(world.drones, scn.sensing, dt)

    # (9) log
    world.clock.steps += 1
    world.log.steps.append(
        StepRecord(
            t=world.clock.sim_time,
            J=global_objective(world.importance),
            states=np.stack([d.as_array() for d in world.drones]),
            u=u,
            w=w,
            min_pair_dist=world.min_pair_dist(),
            active_rows=tuple(active),
        )
    )
    return world


def run_mission(scenario: Scenario) -> MissionLog:
    """Run a mission to completion (objective target, time limit, or path end).

    An unsafe state aborts the run: the offending report lands in the log and
    the last commanded input is zero.
    """
    world = World(scenario)
    world.record_initial()
    while True:
        J = global_objective(world.importance)
        if J <= scenario.j_stop:
            break
        if world.clock.sim_time >= scenario.t_max - 1e-12:
            break
        if world.baseline_done:
            break
        try:
            step(world)
        except EmergencyStopError as exc:
            world.log.emergency = {"drone": exc.drone, **exc.report}
            n = len(world.drones)
            world.log.steps.append(
                StepRecord(
                    t=world.clock.sim_time,
                    J=global_objective(world.importance),
                    states=np.stack([d.as_array() for d in world.drones]),
                    u=np.zeros((n, 5)),
                    w=np.zeros(n),
                    min_pair_dist=world.min_pair_dist(),
                    active_rows=tuple(0 for _ in range(n)),
                )
            )
            break
    return world.log
