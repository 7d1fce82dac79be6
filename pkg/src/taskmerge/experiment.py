"""Paired experiment matrix with per-repetition rows and confidence intervals.

Every repetition generates one trace per (load, repetition); every mode in
every cell runs on that same trace, and each mode is compared against a
NoMerge run of the same trace, queue policy and uncertainty level.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import stats

from .engine import EngineConfig, MergePolicyMode, MetricsReport, makespan_saving, run
from .policy import QueuingPolicy
from .position import PositionMode
from .tracegen import WorkloadSpec, generate

ALL_MODES = tuple(MergePolicyMode)


@dataclass(frozen=True)
class ExperimentPlan:
    loads: tuple[int, ...] = (1000, 1500, 2000, 2500)
    modes: tuple[MergePolicyMode, ...] = ALL_MODES
    queue_policies: tuple[QueuingPolicy, ...] = (QueuingPolicy.FCFS,)
    position_finder: tuple[bool, ...] = (False,)
    sd_scales: tuple[float, ...] = (1.0,)
    reps: int = 30
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(
            m if isinstance(m, MergePolicyMode) else MergePolicyMode.parse(m) for m in self.modes))
        object.__setattr__(self, "queue_policies", tuple(
            p if isinstance(p, QueuingPolicy) else QueuingPolicy.parse(p) for p in self.queue_policies))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for name in ("loads", "modes", "queue_policies", "position_finder", "sd_scales"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if min(self.loads) < 1:
            raise ValueError("loads must be >= 1")
        if min(self.sd_scales) < 0:
            raise ValueError("sd_scales must be >= 0")

    def cells(self) -> list["Cell"]:
        return [Cell(*c) for c in itertools.product(
            self.loads, self.queue_policies, self.position_finder, self.sd_scales, self.modes)]

    def seed(self, rep: int) -> int:
        return self.base_seed + rep


@dataclass(frozen=True)
class Cell:
    load: int
    queue_policy: QueuingPolicy
    position_finder: bool
    sd_scale: float
    mode: MergePolicyMode

    def describe(self) -> str:
        return (f"load={self.load} policy={self.queue_policy.value} "
                f"position_finder={'on' if self.position_finder else 'off'} "
                f"sd_scale={self.sd_scale:g} mode={self.mode.value}")


class ExperimentError(RuntimeError):
    pass


RAW_METRICS = ["dmr", "makespan", "dmr_reduction", "makespan_saving_pct",
               "merges_task_level", "merges_data_and_operation", "merges_data_only",
               "declined", "impact_evaluations", "mean_osl"]
CI_METRICS = ["dmr", "makespan", "dmr_reduction", "makespan_saving_pct"]
COLUMNS = (["row_type", "load", "queue_policy", "position_finder", "sd_scale", "mode",
            "rep", "seed", "n"] + RAW_METRICS
           + [f"{m}_ci_{side}" for m in CI_METRICS for side in ("low", "high")])


def ci_halfwidth(values: Sequence[float], level: float = 0.95) -> float:
    """Half-width of the two-sided interval on the mean.

    Uses the t quantile below 30 samples and the normal quantile from 30 on.
    """
    n = len(values)
    if n < 2:
        return math.nan
    sd = float(np.std(values, ddof=1))
    q = stats.t.ppf(0.5 + level / 2, n - 1) if n < 30 else stats.norm.ppf(0.5 + level / 2)
    return float(q) * sd / math.sqrt(n)


def one_sided_lower_bound(diffs: Sequence[float], level: float = 0.95) -> float:
    """Lower confidence bound on the mean of paired differences."""
    n = len(diffs)
    mean = float(np.mean(diffs))
    if n < 2:
        return math.nan
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        return mean
    return mean - float(stats.t.ppf(level, n - 1)) * sd / math.sqrt(n)


def _engine_config(base: EngineConfig, cell: Cell, mode: MergePolicyMode, seed: int) -> EngineConfig:
    return base.with_(
        merge_mode=mode,
        queue_policy=cell.queue_policy,
        position_mode=PositionMode.RELAXED if cell.position_finder else PositionMode.MAINTAINED,
        sd_scale=cell.sd_scale,
        seed=seed,
    )


def _rep_rows(args) -> list[dict]:
    """All cells of one (load, repetition) pair, sharing one trace."""
    plan, workload, engine, load, rep, cells = args
    seed = plan.seed(rep)
    trace = generate(replace(workload, total_tasks=load), seed)
    baselines: dict[tuple, MetricsReport] = {}
    rows = []
    for cell in cells:
        try:
            key = (cell.queue_policy, cell.sd_scale)
            if key not in baselines:
                baselines[key] = run(trace, _engine_config(engine, cell, MergePolicyMode.NO_MERGE, seed))
            base = baselines[key]
            rep_report = base if cell.mode == MergePolicyMode.NO_MERGE else run(
                trace, _engine_config(engine, cell, cell.mode, seed))
        except Exception as exc:
            raise ExperimentError(f"{cell.describe()} rep={rep} seed={seed}: {exc}") from exc
        rows.append(_raw_row(cell, rep, seed, rep_report, base))
    return rows


def _raw_row(cell: Cell, rep: int, seed: int, r: MetricsReport, base: MetricsReport) -> dict:
    return {
        "row_type": "raw",
        "load": cell.load,
        "queue_policy": cell.queue_policy.value,
        "position_finder": "on" if cell.position_finder else "off",
        "sd_scale": cell.sd_scale,
        "mode": cell.mode.value,
        "rep": rep,
        "seed": seed,
        "n": r.total_tasks,
        "dmr": r.dmr,
        "makespan": r.makespan,
        "dmr_reduction": base.dmr - r.dmr,
        "makespan_saving_pct": makespan_saving(base.makespan, r.makespan),
        "merges_task_level": r.merges_task_level,
        "merges_data_and_operation": r.merges_data_and_operation,
        "merges_data_only": r.merges_data_only,
        "declined": r.declined,
        "impact_evaluations": r.impact_evaluations,
        "mean_osl": r.mean_osl,
    }


def aggregate(raw: Sequence[dict]) -> dict:
    """Mean of every metric plus 95% intervals, for rows of one cell."""
    first = raw[0]
    row = {k: first[k] for k in ("load", "queue_policy", "position_finder", "sd_scale", "mode")}
    row.update(row_type="aggregate", rep="", seed="", n=len(raw))
    for m in RAW_METRICS:
        row[m] = float(np.mean([r[m] for r in raw]))
    for m in CI_METRICS:
        h = ci_halfwidth([r[m] for r in raw])
        row[f"{m}_ci_low"] = row[m] - h
        row[f"{m}_ci_high"] = row[m] + h
    return row


def run_plan(plan: ExperimentPlan, workload: WorkloadSpec = WorkloadSpec(),
             engine: EngineConfig = EngineConfig(), jobs: int = 1) -> list[dict]:
    """Raw rows in plan order, then one aggregate row per cell."""
    cells = plan.cells()
    tasks = []
    for load in plan.loads:
        load_cells = [c for c in cells if c.load == load]
        for rep in range(plan.reps):
            tasks.append((plan, workload, engine, load, rep, load_cells))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_rep_rows, tasks))
    else:
        results = [_rep_rows(t) for t in tasks]

    by_cell: dict[Cell, list[dict]] = {c: [] for c in cells}
    for rows in results:
        for cell, row in zip([c for c in cells if c.load == rows[0]["load"]], rows):
            by_cell[cell].append(row)
    raw_rows = [r for c in cells for r in sorted(by_cell[c], key=lambda r: r["rep"])]
    agg_rows = [aggregate(by_cell[c]) for c in cells]
    return raw_rows + agg_rows


def _cell_text(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(rows: Iterable[dict], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell_text(r.get(c, "")) for c in COLUMNS])


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    write_rows(rows, buf)
    return buf.getvalue()


def iter_cells(rows: Iterable[dict], row_type: str = "raw") -> Iterator[tuple[tuple, list[dict]]]:
    """Group rows of one type by cell, preserving order."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["row_type"] != row_type:
            continue
        key = (r["load"], r["queue_policy"], r["position_finder"], r["sd_scale"], r["mode"])
        groups.setdefault(key, []).append(r)
    return iter(groups.items())
