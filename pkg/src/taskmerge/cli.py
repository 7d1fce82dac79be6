"""Command-line front end.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures
(bad input files, invalid configuration, failed experiment cells).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, Settings, load_settings, parse_bool
from .engine import RECORD_FIELDS, EngineConfig, MergePolicyMode, run
from .experiment import ExperimentError, rows_to_csv, run_plan
from .position import PositionMode
from .tracegen import TraceFormatError, dumps_trace, generate, load_trace

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

SUMMARY_FIELDS = ["mode", "queue_policy", "load", "dmr", "makespan", "late_tasks",
                  "merges_task_level", "merges_data_and_operation", "merges_data_only",
                  "declined", "impact_evaluations", "index_probes", "mean_osl"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [engine]/[workload]/[profile]/[experiment] sections")
    p.add_argument("--seed", type=int, help="random seed (base seed for experiments)")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="taskmerge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic trace")
    _add_common(g)
    g.add_argument("--tasks", "--loads", dest="tasks", type=int, help="number of tasks")
    g.add_argument("--sd-scale", type=float, help="multiply generated standard deviations")

    r = sub.add_parser("run", help="simulate one trace and write summary CSV")
    r.add_argument("trace", help="trace file")
    _add_common(r)
    r.add_argument("--modes", type=_csv_list, help="comma-separated merge modes")
    r.add_argument("--queue-policy", help="FCFS, EDF or MaxUrgency")
    r.add_argument("--position-finder", help="on or off")
    r.add_argument("--sd-scale", type=float, help="multiply task standard deviations")
    r.add_argument("--records", help="also write per-task records to this CSV")

    e = sub.add_parser("experiment", help="run the paired experiment matrix")
    _add_common(e)
    e.add_argument("--reps", type=int, help="repetitions per cell")
    e.add_argument("--modes", type=_csv_list, help="comma-separated merge modes")
    e.add_argument("--loads", type=_csv_list, help="comma-separated task counts")
    e.add_argument("--sd-scale", type=_csv_list, help="comma-separated sd multipliers")
    e.add_argument("--position-finder", type=_csv_list, help="on, off or on,off")
    e.add_argument("--queue-policy", type=_csv_list, help="comma-separated queuing policies")
    e.add_argument("--jobs", type=int, default=1, help="worker processes")

    v = sub.add_parser("validate-config", help="check a configuration file and print the result")
    v.add_argument("config", help="INI file")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _engine_overrides(engine: EngineConfig, args) -> EngineConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "queue_policy", None) and isinstance(args.queue_policy, str):
        changes["queue_policy"] = args.queue_policy
    if getattr(args, "position_finder", None) and isinstance(args.position_finder, str):
        on = parse_bool(args.position_finder)
        changes["position_mode"] = PositionMode.RELAXED if on else PositionMode.MAINTAINED
    if getattr(args, "sd_scale", None) is not None and not isinstance(args.sd_scale, list):
        changes["sd_scale"] = args.sd_scale
    return engine.with_(**changes) if changes else engine


def cmd_generate(settings: Settings, args) -> int:
    spec = settings.workload
    if args.tasks is not None:
        spec = dataclasses.replace(spec, total_tasks=args.tasks)
    if args.sd_scale is not None:
        spec = dataclasses.replace(spec, sd_scale=args.sd_scale)
    seed = args.seed if args.seed is not None else spec.seed
    _emit(dumps_trace(generate(spec, seed)), args.out)
    return EXIT_OK


def cmd_run(settings: Settings, args) -> int:
    trace = load_trace(args.trace)
    engine = _engine_overrides(settings.engine, args)
    modes = [MergePolicyMode.parse(m) for m in args.modes] if args.modes else [engine.merge_mode]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    reports = []
    for mode in modes:
        rep = run(trace, engine.with_(merge_mode=mode))
        reports.append(rep)
        w.writerow([_fmt(x) for x in (
            rep.mode, rep.queue_policy, rep.total_tasks, rep.dmr, rep.makespan, rep.late_tasks,
            rep.merges_task_level, rep.merges_data_and_operation, rep.merges_data_only,
            rep.declined, rep.impact_evaluations, rep.index_probes, rep.mean_osl)])
    _emit(buf.getvalue(), args.out)
    if args.records:
        rb = io.StringIO()
        rw = csv.writer(rb, lineterminator="\n")
        rw.writerow(["mode"] + RECORD_FIELDS)
        for rep in reports:
            for rec in rep.records:
                rw.writerow([rep.mode] + [_fmt(getattr(rec, f)) for f in RECORD_FIELDS])
        Path(args.records).write_text(rb.getvalue(), encoding="utf-8")
    return EXIT_OK


def cmd_experiment(settings: Settings, args) -> int:
    plan = settings.plan
    changes = {}
    if args.reps is not None:
        changes["reps"] = args.reps
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.modes:
        changes["modes"] = tuple(MergePolicyMode.parse(m) for m in args.modes)
    if args.loads:
        changes["loads"] = tuple(int(x) for x in args.loads)
    if args.sd_scale:
        changes["sd_scales"] = tuple(float(x) for x in args.sd_scale)
    if args.position_finder:
        changes["position_finder"] = tuple(parse_bool(x) for x in args.position_finder)
    if args.queue_policy:
        changes["queue_policies"] = tuple(args.queue_policy)
    if changes:
        plan = dataclasses.replace(plan, **changes)
    rows = run_plan(plan, settings.workload, settings.engine, jobs=args.jobs)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_validate(settings: Settings, args) -> int:
    for section, values in settings.as_sections().items():
        print(f"[{section}]")
        for k, v in values.items():
            print(f"{k} = {v}")
        print()
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "experiment": cmd_experiment,
    "validate-config": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        settings = load_settings(args.config)
        return COMMANDS[args.command](settings, args)
    except (ConfigError, TraceFormatError, ExperimentError, OSError, ValueError) as exc:
        print(f"taskmerge {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
