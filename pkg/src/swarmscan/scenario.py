"""Declarative run configuration: flat key=value files with dotted keys.

A scenario pins everything a mission needs (regions, discretization, gains,
feedback method, oracle knobs, seed, termination), so that a run is fully
reproducible from its resolved scenario file.  Unset keys take the standard
defaults; command-line flags override file values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import ControlParams
from .geometry import DroneState, Region, wrap_angle
from .recon import OracleParams
from .sensing import SensingParams


class ScenarioError(ValueError):
    """Raised for unreadable, unknown, or inconsistent scenario content."""


@dataclass(frozen=True)
class Scenario:
    """Complete mission configuration."""

    target_region: Region
    flight_region: Region
    theta_h_range: tuple[float, float]
    theta_v_range: tuple[float, float]
    resolution: tuple[float, float, float, float, float]
    drones: tuple[DroneState, ...]
    sensing: SensingParams
    control: ControlParams
    delta1: float
    delta2_active: float
    j_threshold: float
    feedback_method: str
    sigma4: float
    kappa: float
    core_spacing: float
    normal_radius: float
    cylinder_radius: float
    event_period: float
    oracle: OracleParams
    scene_path: str | None
    scene_edge: float
    seed: int
    out_dir: str
    j_stop: float
    t_max: float
    dt: float
    baseline: str
    freeze_altitude: bool
    freeze_gimbal: bool
    lawnmower_altitude: float
    lawnmower_spacing: float
    lawnmower_speed: float

    @property
    def frozen_axes(self) -> tuple[int, ...]:
        axes = []
        if self.freeze_altitude:
            axes.append(2)
        if self.freeze_gimbal:
            axes.append(4)
        return tuple(axes)


def default_drone_states(
    n: int,
    target_region: Region,
    flight_region: Region,
    control: ControlParams,
    freeze_gimbal: bool = False,
) -> tuple[DroneState, ...]:
    """Deterministic safe initial poses: a ring above the scene center."""
    if n < 1:
        raise ScenarioError("drone count must be at least one")
    pitch = (
        math.pi / 2
        if freeze_gimbal
        else 0.5 * (control.theta_v_min + control.theta_v_max)
    )
    cx, cy = target_region.center[:2]
    z0 = min(
        max(target_region.maxs[2], flight_region.mins[2] + 0.1),
        flight_region.maxs[2] - 0.1,
    )
    if n == 1:
        y_off = min(1.0, 0.2 * target_region.extent[1])
        return (DroneState(cx, cy + y_off, z0, -math.pi / 2, pitch),)
    radius = max(1.1 * control.d / (2.0 * math.sin(math.pi / n)), 0.25 * min(target_region.extent[:2]))
    states = []
    for i in range(n):
        ang = 2.0 * math.pi * i / n
        x = cx + radius * math.cos(ang)
        y = cy + radius * math.sin(ang)
        states.append(DroneState(x, y, z0, wrap_angle(ang + math.pi), pitch))
    return tuple(states)


_DEFAULTS: dict[str, object] = {
    "field.x_min": -3.0,
    "field.x_max": 3.0,
    "field.y_min": -3.0,
    "field.y_max": 3.0,
    "field.z_min": 0.0,
    "field.z_max": 2.0,
    "field.yaw_min": -math.pi,
    "field.yaw_max": math.pi,
    "field.pitch_min": math.pi / 3,
    "field.pitch_max": math.pi / 2,
    "field.res_x": 0.3,
    "field.res_y": 0.3,
    "field.res_z": 0.3,
    "field.res_yaw": 0.3,
    "field.res_pitch": 0.3,
    "flight.x_min": -4.0,
    "flight.x_max": 4.0,
    "flight.y_min": -4.0,
    "flight.y_max": 4.0,
    "flight.z_min": 0.5,
    "flight.z_max": 5.0,
    "sensing.ideal_distance": 1.0,
    "sensing.sigma_align": 0.07,
    "sensing.sigma_facing": 0.095,
    "sensing.sigma_range": 0.3,
    "importance.delta1": 3.0,
    "importance.delta2_active": 1.0,
    "importance.j_threshold": 0.5,
    "control.gamma": 0.012,
    "control.a1": 1.0,
    "control.a2": 1.0,
    "control.a3": 1.0,
    "control.a4": 1.0,
    "control.epsilon": 0.01,
    "control.min_separation": 1.0,
    "control.pitch_min": math.pi / 3,
    "control.pitch_max": math.pi / 2,
    "control.u_max_x": 1.0,
    "control.u_max_y": 1.0,
    "control.u_max_z": 1.0,
    "control.u_max_yaw": 1.0,
    "control.u_max_pitch": 1.0,
    "control.pitch_barrier_halfrange": False,
    "feedback.method": "grid",
    "feedback.sigma4": 0.4,
    "feedback.kappa": 0.7,
    "feedback.core_spacing": 0.6,
    "feedback.normal_radius": 1.2,
    "feedback.cylinder_radius": 0.6,
    "feedback.event_period": 5.0,
    "oracle.reveal_threshold": 0.5,
    "oracle.noise_scale": 0.08,
    "oracle.noise_halflife": 1.0,
    "oracle.refine_threshold": 3.0,
    "oracle.scene_path": "",
    "oracle.scene_edge": 0.065,
    "run.seed": 0,
    "run.out_dir": "out",
    "run.j_stop": 0.02,
    "run.t_max": 2000.0,
    "run.dt": 0.05,
    "run.baseline": "none",
    "run.freeze_altitude": False,
    "run.freeze_gimbal": False,
    "lawnmower.altitude": 2.0,
    "lawnmower.spacing": 1.0,
    "lawnmower.speed": 0.8,
    "drones.count": 1,
}

_FEEDBACK_METHODS = ("none", "grid", "m3c2")
_BASELINES = ("none", "lawnmower")


def _parse_value(key: str, raw: str, line_no: int | None):
    default = _DEFAULTS.get(key)
    where = f" (line {line_no})" if line_no is not None else ""
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ScenarioError(f"{key}: expected a boolean, got {raw!r}{where}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError as exc:
            raise ScenarioError(f"{key}: expected an integer, got {raw!r}{where}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ScenarioError(f"{key}: expected a number, got {raw!r}{where}") from exc
    return raw.strip()


def _parse_drone(key: str, raw: str, line_no: int | None) -> DroneState:
    where = f" (line {line_no})" if line_no is not None else ""
    parts = raw.replace(",", " ").split()
    if len(parts) != 5:
        raise ScenarioError(
            f"{key}: expected 'x y z yaw pitch' (5 values), got {raw!r}{where}"
        )
    try:
        vals = [float(v) for v in parts]
    except ValueError as exc:
        raise ScenarioError(f"{key}: non-numeric drone pose {raw!r}{where}") from exc
    try:
        return DroneState(*vals)
    except ValueError as exc:
        raise ScenarioError(f"{key}: {exc}{where}") from exc


def parse_scenario(path: str | None = None, overrides: dict | None = None) -> Scenario:
    """Load a scenario file (optional) and apply flag overrides on top.

    Unknown keys and invariant violations raise ScenarioError with the
    offending line.
    """
    values = dict(_DEFAULTS)
    drone_poses: dict[int, DroneState] = {}
    explicit_drones = False
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario file {path!r}: {exc}") from exc
        for line_no, line in enumerate(lines, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ScenarioError(f"line {line_no}: expected key = value, got {body!r}")
            key, raw = (s.strip() for s in body.split("=", 1))
            if key.startswith("drones.") and key != "drones.count":
                index_part = key.split(".", 1)[1]
                if not index_part.isdigit():
                    raise ScenarioError(f"line {line_no}: unknown key {key!r}")
                drone_poses[int(index_part)] = _parse_drone(key, raw, line_no)
                explicit_drones = True
                continue
            if key not in _DEFAULTS:
                raise ScenarioError(f"line {line_no}: unknown key {key!r}")
            values[key] = _parse_value(key, raw, line_no)
    for key, raw in (overrides or {}).items():
        if key.startswith("drones.") and key != "drones.count":
            drone_poses[int(key.split(".", 1)[1])] = (
                raw if isinstance(raw, DroneState) else _parse_drone(key, str(raw), None)
            )
            explicit_drones = True
            continue
        if key not in _DEFAULTS:
            raise ScenarioError(f"unknown override key {key!r}")
        if key == "drones.count":
            explicit_drones = False  # re-placing with the new count
            drone_poses.clear()
        values[key] = (
            raw
            if not isinstance(raw, str)
            else _parse_value(key, raw, None)
        )
    return build_scenario(values, drone_poses if explicit_drones else None)


def build_scenario(values: dict, drone_poses: dict[int, DroneState] | None = None) -> Scenario:
    """Assemble and validate a Scenario from a resolved key/value mapping."""
    v = values
    try:
        target = Region(
            (v["field.x_min"], v["field.y_min"], v["field.z_min"]),
            (v["field.x_max"], v["field.y_max"], v["field.z_max"]),
        )
        flight = Region(
            (v["flight.x_min"], v["flight.y_min"], v["flight.z_min"]),
            (v["flight.x_max"], v["flight.y_max"], v["flight.z_max"]),
        )
        sensing = SensingParams(
            ideal_distance=v["sensing.ideal_distance"],
            sigma_align=v["sensing.sigma_align"],
            sigma_facing=v["sensing.sigma_facing"],
            sigma_range=v["sensing.sigma_range"],
        )
        control = ControlParams(
            gamma=v["control.gamma"],
            a1=v["control.a1"],
            a2=v["control.a2"],
            a3=v["control.a3"],
            a4=v["control.a4"],
            epsilon=v["control.epsilon"],
            d=v["control.min_separation"],
            theta_v_min=v["control.pitch_min"],
            theta_v_max=v["control.pitch_max"],
            u_max=(
                v["control.u_max_x"],
                v["control.u_max_y"],
                v["control.u_max_z"],
                v["control.u_max_yaw"],
                v["control.u_max_pitch"],
            ),
            pitch_barrier_halfrange=v["control.pitch_barrier_halfrange"],
        )
        oracle = OracleParams(
            reveal_threshold=v["oracle.reveal_threshold"],
            noise_scale=v["oracle.noise_scale"],
            noise_halflife=v["oracle.noise_halflife"],
            refine_threshold=v["oracle.refine_threshold"],
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    if v["feedback.method"] not in _FEEDBACK_METHODS:
        raise ScenarioError(
            f"feedback.method must be one of {_FEEDBACK_METHODS}, got {v['feedback.method']!r}"
        )
    if v["run.baseline"] not in _BASELINES:
        raise ScenarioError(
            f"run.baseline must be one of {_BASELINES}, got {v['run.baseline']!r}"
        )
    for key in (
        "field.res_x",
        "field.res_y",
        "field.res_z",
        "field.res_yaw",
        "field.res_pitch",
        "feedback.sigma4",
        "feedback.kappa",
        "feedback.core_spacing",
        "feedback.normal_radius",
        "feedback.cylinder_radius",
        "feedback.event_period",
        "oracle.scene_edge",
        "run.dt",
        "lawnmower.altitude",
        "lawnmower.spacing",
        "lawnmower.speed",
    ):
        if v[key] <= 0.0:
            raise ScenarioError(f"{key} must be positive, got {v[key]}")
    if not 0.0 < v["importance.j_threshold"] <= 1.0:
        raise ScenarioError("importance.j_threshold must lie in (0, 1]")
    if v["importance.delta1"] <= 0.0:
        raise ScenarioError("importance.delta1 must be positive")
    if v["importance.delta2_active"] < 0.0:
        raise ScenarioError("importance.delta2_active must be nonnegative")
    if v["run.t_max"] < 0.0:
        raise ScenarioError("run.t_max must be nonnegative")
    if not v["field.yaw_min"] < v["field.yaw_max"]:
        raise ScenarioError("field yaw range must be nonempty")
    if not v["field.pitch_min"] < v["field.pitch_max"]:
        raise ScenarioError("field pitch range must be nonempty")

    n = int(v["drones.count"])
    freeze_gimbal = bool(v["run.freeze_gimbal"])
    if drone_poses:
        missing = [i for i in range(n) if i not in drone_poses]
        if missing:
            raise ScenarioError(f"drone poses missing for indices {missing}")
        extra = [i for i in drone_poses if i >= n]
        if extra:
            raise ScenarioError(f"drone pose indices beyond drones.count: {extra}")
        drones = tuple(drone_poses[i] for i in range(n))
        if freeze_gimbal or v["run.baseline"] == "lawnmower":
            drones = tuple(
                DroneState(d.x, d.y, d.z, d.theta_h, math.pi / 2) for d in drones
            )
    else:
        drones = default_drone_states(
            n,
            target,
            flight,
            control,
            freeze_gimbal or v["run.baseline"] == "lawnmower",
        )

    scene_path = v["oracle.scene_path"] or None

    scn = Scenario(
        target_region=target,
        flight_region=flight,
        theta_h_range=(v["field.yaw_min"], v["field.yaw_max"]),
        theta_v_range=(v["field.pitch_min"], v["field.pitch_max"]),
        resolution=(
            v["field.res_x"],
            v["field.res_y"],
            v["field.res_z"],
            v["field.res_yaw"],
            v["field.res_pitch"],
        ),
        drones=drones,
        sensing=sensing,
        control=control,
        delta1=v["importance.delta1"],
        delta2_active=v["importance.delta2_active"],
        j_threshold=v["importance.j_threshold"],
        feedback_method=v["feedback.method"],
        sigma4=v["feedback.sigma4"],
        kappa=v["feedback.kappa"],
        core_spacing=v["feedback.core_spacing"],
        normal_radius=v["feedback.normal_radius"],
        cylinder_radius=v["feedback.cylinder_radius"],
        event_period=v["feedback.event_period"],
        oracle=oracle,
        scene_path=scene_path,
        scene_edge=v["oracle.scene_edge"],
        seed=int(v["run.seed"]),
        out_dir=str(v["run.out_dir"]),
        j_stop=float(v["run.j_stop"]),
        t_max=float(v["run.t_max"]),
        dt=float(v["run.dt"]),
        baseline=v["run.baseline"],
        freeze_altitude=bool(v["run.freeze_altitude"]),
        freeze_gimbal=freeze_gimbal,
        lawnmower_altitude=v["lawnmower.altitude"],
        lawnmower_spacing=v["lawnmower.spacing"],
        lawnmower_speed=v["lawnmower.speed"],
    )
    validate_scenario(scn)
    return scn


def validate_scenario(scn: Scenario) -> None:
    """Reject scenarios whose initial configuration is already unsafe."""
    for i, d in enumerate(scn.drones):
        if not scn.flight_region.contains(d.position):
            raise ScenarioError(f"drone {i} starts outside the flight region")
        if not scn.control.theta_v_min <= d.theta_v <= scn.control.theta_v_max:
            if not (scn.freeze_gimbal or scn.baseline == "lawnmower"):
                raise ScenarioError(
                    f"drone {i} pitch {d.theta_v:.4f} outside "
                    f"[{scn.control.theta_v_min:.4f}, {scn.control.theta_v_max:.4f}]"
                )
    for i in range(len(scn.drones)):
        for j in range(i + 1, len(scn.drones)):
            dist = float(
                np.linalg.norm(scn.drones[i].position - scn.drones[j].position)
            )
            if dist < scn.control.d:
                raise ScenarioError(
                    f"drones {i} and {j} start {dist:.3f} m apart, below the "
                    f"minimum separation {scn.control.d}"
                )
    if scn.baseline == "lawnmower" and len(scn.drones) != 1:
        raise ScenarioError("the lawnmower baseline supports a single drone")
    if not (
        scn.flight_region.mins[2] <= scn.lawnmower_altitude <= scn.flight_region.maxs[2]
    ):
        if scn.baseline == "lawnmower":
            raise ScenarioError("lawnmower altitude outside the flight region")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_values(scn: Scenario) -> dict[str, object]:
    """Flatten a Scenario back into its complete key/value mapping."""
    out: dict[str, object] = {}
    out["field.x_min"], out["field.y_min"], out["field.z_min"] = scn.target_region.mins
    out["field.x_max"], out["field.y_max"], out["field.z_max"] = scn.target_region.maxs
    out["field.yaw_min"], out["field.yaw_max"] = scn.theta_h_range
    out["field.pitch_min"], out["field.pitch_max"] = scn.theta_v_range
    (
        out["field.res_x"],
        out["field.res_y"],
        out["field.res_z"],
        out["field.res_yaw"],
        out["field.res_pitch"],
    ) = scn.resolution
    out["flight.x_min"], out["flight.y_min"], out["flight.z_min"] = scn.flight_region.mins
    out["flight.x_max"], out["flight.y_max"], out["flight.z_max"] = scn.flight_region.maxs
    out["sensing.ideal_distance"] = scn.sensing.ideal_distance
    out["sensing.sigma_align"] = scn.sensing.sigma_align
    out["sensing.sigma_facing"] = scn.sensing.sigma_facing
    out["sensing.sigma_range"] = scn.sensing.sigma_range
    out["importance.delta1"] = scn.delta1
    out["importance.delta2_active"] = scn.delta2_active
    out["importance.j_threshold"] = scn.j_threshold
    out["control.gamma"] = scn.control.gamma
    out["control.a1"] = scn.control.a1
    out["control.a2"] = scn.control.a2
    out["control.a3"] = scn.control.a3
    out["control.a4"] = scn.control.a4
    out["control.epsilon"] = scn.control.epsilon
    out["control.min_separation"] = scn.control.d
    out["control.pitch_min"] = scn.control.theta_v_min
    out["control.pitch_max"] = scn.control.theta_v_max
    (
        out["control.u_max_x"],
        out["control.u_max_y"],
        out["control.u_max_z"],
        out["control.u_max_yaw"],
        out["control.u_max_pitch"],
    ) = scn.control.u_max
    out["control.pitch_barrier_halfrange"] = scn.control.pitch_barrier_halfrange
    out["feedback.method"] = scn.feedback_method
    out["feedback.sigma4"] = scn.sigma4
    out["feedback.kappa"] = scn.kappa
    out["feedback.core_spacing"] = scn.core_spacing
    out["feedback.normal_radius"] = scn.normal_radius
    out["feedback.cylinder_radius"] = scn.cylinder_radius
    out["feedback.event_period"] = scn.event_period
    out["oracle.reveal_threshold"] = scn.oracle.reveal_threshold
    out["oracle.noise_scale"] = scn.oracle.noise_scale
    out["oracle.noise_halflife"] = scn.oracle.noise_halflife
    out["oracle.refine_threshold"] = scn.oracle.refine_threshold
    out["oracle.scene_path"] = scn.scene_path or ""
    out["oracle.scene_edge"] = scn.scene_edge
    out["run.seed"] = scn.seed
    out["run.out_dir"] = scn.out_dir
    out["run.j_stop"] = scn.j_stop
    out["run.t_max"] = scn.t_max
    out["run.dt"] = scn.dt
    out["run.baseline"] = scn.baseline
    out["run.freeze_altitude"] = scn.freeze_altitude
    out["run.freeze_gimbal"] = scn.freeze_gimbal
    out["lawnmower.altitude"] = scn.lawnmower_altitude
    out["lawnmower.spacing"] = scn.lawnmower_spacing
    out["lawnmower.speed"] = scn.lawnmower_speed
    out["drones.count"] = len(scn.drones)
    return out


def resolved_text(scn: Scenario) -> str:
    """Canonical full-precision serialization; re-parsing reproduces the
    scenario exactly."""
    lines = []
    for key, value in resolved_values(scn).items():
        lines.append(f"{key} = {_format_value(value)}")
    for i, d in enumerate(scn.drones):
        pose = " ".join(repr(float(v)) for v in d.as_array())
        lines.append(f"drones.{i} = {pose}")
    return "\n".join(lines) + "\n"
