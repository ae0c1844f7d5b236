"""Deterministic file outputs of a mission run.

A run emits steps.csv (one row per control period), events.csv (one row per
reconstruction event), metrics.json (run summary), meshes/event_<k>.ply, and
scenario.resolved (the complete configuration, re-parseable to an identical
scenario).  Identical runs produce byte-identical file sets.
"""

from __future__ import annotations

import json
import math
import os

from .mesh import write_mesh
from .scenario import Scenario, resolved_text
from .sim import MissionLog


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _round9(x: float) -> float:
    if math.isnan(x) or math.isinf(x):
        return x
    return float(f"{x:.9g}")


def steps_csv(log: MissionLog, n_drones: int) -> str:
    cols = ["t", "J"]
    for i in range(1, n_drones + 1):
        cols += [
            f"x_{i}",
            f"y_{i}",
            f"z_{i}",
            f"th_{i}",
            f"tv_{i}",
            f"ux_{i}",
            f"uy_{i}",
            f"uz_{i}",
            f"uth_{i}",
            f"utv_{i}",
            f"w_{i}",
        ]
    cols.append("min_pair_dist")
    lines = [",".join(cols)]
    for rec in log.steps:
        row = [_fmt(rec.t), _fmt(rec.J)]
        for i in range(n_drones):
            row.extend(_fmt(v) for v in rec.states[i])
            row.extend(_fmt(v) for v in rec.u[i])
            row.append(_fmt(rec.w[i]))
        row.append(_fmt(rec.min_pair_dist))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def events_csv(log: MissionLog) -> str:
    cols = [
        "t_event",
        "sim_time",
        "h2_max",
        "h2_mean",
        "jump_total",
        "mesh_vertices",
        "mesh_faces",
        "fscore",
        "precision",
        "recall",
    ]
    lines = [",".join(cols)]
    for ev in log.events:
        lines.append(
            ",".join(
                [
                    str(ev.event_index),
                    _fmt(ev.sim_time),
                    _fmt(ev.h2_max),
                    _fmt(ev.h2_mean),
                    _fmt(ev.jump_total),
                    str(ev.mesh_vertices),
                    str(ev.mesh_faces),
                    _fmt(ev.metrics.f_score),
                    _fmt(ev.metrics.precision),
                    _fmt(ev.metrics.recall),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def metrics_json(log: MissionLog, scenario: Scenario) -> str:
    final = log.final_metrics
    payload = {
        "final_J": _round9(log.final_J),
        "sim_time": _round9(log.steps[-1].t if log.steps else 0.0),
        "n_steps": len(log.steps) - 1,
        "n_events": len(log.events),
        "n_drones": len(scenario.drones),
        "seed": scenario.seed,
        "feedback_method": scenario.feedback_method,
        "baseline": scenario.baseline,
        "emergency_stop": log.emergency is not None,
        "final_fscore": _round9(final.f_score) if final else None,
        "final_precision": _round9(final.precision) if final else None,
        "final_recall": _round9(final.recall) if final else None,
        "eta": _round9(final.eta) if final else None,
        "objective_threshold_times": {
            str(th): (
                _round9(t)
                if (t := log.time_to_objective(th)) is not None
                else None
            )
            for th in (0.5, 0.25, 0.1)
        },
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_outputs(log: MissionLog, scenario: Scenario, out_dir: str) -> list[str]:
    """Write the full deterministic file set; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    mesh_dir = os.path.join(out_dir, "meshes")
    os.makedirs(mesh_dir, exist_ok=True)
    written = []

    def emit(path: str, data: bytes) -> None:
        with open(path, "wb") as fh:
            fh.write(data)
        written.append(path)

    n = len(scenario.drones)
    emit(os.path.join(out_dir, "steps.csv"), steps_csv(log, n).encode())
    emit(os.path.join(out_dir, "events.csv"), events_csv(log).encode())
    emit(os.path.join(out_dir, "metrics.json"), metrics_json(log, scenario).encode())
    emit(os.path.join(out_dir, "scenario.resolved"), resolved_text(scenario).encode())
    for event in log.meshes:
        emit(
            os.path.join(mesh_dir, f"event_{event.event_index}.ply"),
            write_mesh(event.mesh),
        )
    return written
