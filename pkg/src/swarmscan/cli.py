"""Command-line entry points: run missions, evaluate meshes, sweep team sizes."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .metrics import evaluate
from .mesh import parse_mesh
from .outputs import _round9, write_outputs
from .scenario import parse_scenario
from .sim import run_mission


def _run_overrides(args) -> dict:
    overrides: dict[str, object] = {}
    if args.feedback is not None:
        overrides["feedback.method"] = args.feedback
    if args.jth is not None:
        overrides["importance.j_threshold"] = args.jth
    if args.drones is not None:
        overrides["drones.count"] = args.drones
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out_dir"] = args.out
    if args.baseline is not None:
        overrides["run.baseline"] = args.baseline
    if args.freeze_altitude:
        overrides["run.freeze_altitude"] = True
    if args.freeze_gimbal:
        overrides["run.freeze_gimbal"] = True
    if args.tmax is not None:
        overrides["run.t_max"] = args.tmax
    return overrides


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario file (key = value lines)")
    p.add_argument("--feedback", choices=["none", "grid", "m3c2"])
    p.add_argument("--jth", type=float, help="feedback activation threshold on J")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--baseline", choices=["lawnmower"])
    p.add_argument("--freeze-altitude", action="store_true", dest="freeze_altitude")
    p.add_argument("--freeze-gimbal", action="store_true", dest="freeze_gimbal")
    p.add_argument("--tmax", type=float, help="simulated time limit in seconds")


def _cmd_run(args) -> int:
    overrides = _run_overrides(args)
    scenario = parse_scenario(args.scenario, overrides)
    log = run_mission(scenario)
    write_outputs(log, scenario, scenario.out_dir)
    final = log.final_metrics
    print(f"mission finished: t={log.steps[-1].t:.9g} s, J={log.final_J:.9g}")
    if final is not None:
        print(
            f"reconstruction: fscore={final.f_score:.9g} "
            f"precision={final.precision:.9g} recall={final.recall:.9g}"
        )
    if log.emergency is not None:
        print(f"EMERGENCY STOP: {log.emergency}")
        return 1
    print(f"outputs written to {scenario.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.recon, "rb") as fh:
        recon = parse_mesh(fh.read())
    with open(args.truth, "rb") as fh:
        truth = parse_mesh(fh.read())
    report = evaluate(recon, truth, eta=args.eta)
    payload = {
        "precision": _round9(report.precision),
        "recall": _round9(report.recall),
        "f_score": _round9(report.f_score),
        "eta": _round9(report.eta),
        "recon_vertices": report.recon_vertices,
        "truth_vertices": report.truth_vertices,
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _cmd_sweep(args) -> int:
    try:
        team_sizes = [int(v) for v in args.drones.split(",") if v.strip()]
    except ValueError:
        print(f"invalid --drones list: {args.drones!r}", file=sys.stderr)
        return 2
    if not team_sizes:
        print("--drones must list at least one team size", file=sys.stderr)
        return 2
    base_out = args.out or "sweep"
    summary = []
    for n in team_sizes:
        sub_args = argparse.Namespace(**vars(args))
        sub_args.drones = n
        overrides = _run_overrides(sub_args)
        overrides["run.out_dir"] = os.path.join(base_out, f"n{n}")
        scenario = parse_scenario(args.scenario, overrides)
        log = run_mission(scenario)
        write_outputs(log, scenario, scenario.out_dir)
        final = log.final_metrics
        entry = {
            "drones": n,
            "final_J": _round9(log.final_J),
            "sim_time": _round9(log.steps[-1].t),
            "final_fscore": _round9(final.f_score) if final else None,
            "emergency_stop": log.emergency is not None,
            "objective_threshold_times": {
                str(th): (
                    _round9(t)
                    if (t := log.time_to_objective(th)) is not None
                    else None
                )
                for th in (0.5, 0.25, 0.1)
            },
        }
        summary.append(entry)
        print(
            f"n={n}: t={entry['sim_time']} s, J={entry['final_J']}, "
            f"fscore={entry['final_fscore']}"
        )
    os.makedirs(base_out, exist_ok=True)
    with open(os.path.join(base_out, "sweep_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"sweep summary written to {base_out}/sweep_summary.json")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="swarmscan",
        description=(
            "Deterministic multi-drone coverage simulator with "
            "reconstruction-change feedback"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one mission and write its outputs")
    _add_run_flags(run_p)
    run_p.add_argument("--drones", type=int, help="drone count (auto-placed)")
    run_p.set_defaults(func=_cmd_run)

    eval_p = sub.add_parser("eval", help="score a reconstruction against ground truth")
    eval_p.add_argument("--recon", required=True, help="reconstructed mesh (PLY)")
    eval_p.add_argument("--truth", required=True, help="ground-truth mesh (PLY)")
    eval_p.add_argument("--eta", type=float, default=0.05, help="distance threshold (m)")
    eval_p.set_defaults(func=_cmd_eval)

    sweep_p = sub.add_parser("sweep", help="run the same scenario for several team sizes")
    _add_run_flags(sweep_p)
    sweep_p.add_argument(
        "--drones", required=True, help="comma-separated team sizes, e.g. 1,2,4"
    )
    sweep_p.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
