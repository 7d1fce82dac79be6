"""Discrete-event simulation of a batch queue feeding identical machines.

Arrivals pass through admission control (similarity lookup, merge decision,
placement) into the batch queue. Machines take the head of the batch queue
as they become free. Events at the same instant are handled arrivals
first, then completions, then dispatch; ties inside a kind go by id.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .assessor import adaptive_alpha, osl
from .impact import MachineView, SystemSnapshot, decide, evaluate_merge, Decision
from .model import (
    DEFAULT_SHARING,
    MergedTask,
    SharingFactors,
    SimilarityLevel,
    Task,
    sample_runtime,
)
from .policy import QueuingPolicy, insertion_index
from .position import Heuristic, PositionMode, find_position, position_maintained
from .similarity import Admission, SimilarityIndex


class MergePolicyMode(str, Enum):
    NO_MERGE = "NoMerge"
    CONSERVATIVE = "Conservative"
    AGGRESSIVE = "Aggressive"
    ADAPTIVE = "Adaptive"

    @classmethod
    def parse(cls, text: str) -> "MergePolicyMode":
        key = text.strip().lower().replace("_", "").replace("-", "")
        for m in cls:
            if key in (m.value.lower(), m.name.lower().replace("_", "")):
                return m
        raise ValueError(f"unknown merge mode {text!r}")


@dataclass(frozen=True)
class EngineConfig:
    machine_count: int = 8
    queue_policy: QueuingPolicy = QueuingPolicy.FCFS
    merge_mode: MergePolicyMode = MergePolicyMode.CONSERVATIVE
    position_mode: PositionMode = PositionMode.MAINTAINED
    relaxed_heuristic: Heuristic = Heuristic.LINEAR
    fcfs_merge_arrival: str = "existing"
    sharing: SharingFactors = DEFAULT_SHARING
    beta: float = 2.0
    seed: int = 0
    sd_scale: float = 1.0
    machine_queue_depth: int = 0
    osl_window_seconds: float = 60.0
    # Non-adaptive modes sample the OSL trace at most this often (seconds).
    osl_sample_seconds: float = 10.0

    def __post_init__(self):
        coerce = {
            "queue_policy": QueuingPolicy.parse,
            "merge_mode": MergePolicyMode.parse,
            "position_mode": lambda v: PositionMode(str(v).lower()),
            "relaxed_heuristic": lambda v: Heuristic(str(v).lower()),
        }
        for name, parse in coerce.items():
            value = getattr(self, name)
            if isinstance(value, str) and not isinstance(value, Enum):
                object.__setattr__(self, name, parse(value))
        if self.machine_count < 1:
            raise ValueError("machine_count must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.sd_scale < 0:
            raise ValueError("sd_scale must be >= 0")
        if self.machine_queue_depth < 0:
            raise ValueError("machine_queue_depth must be >= 0")
        if self.fcfs_merge_arrival not in ("existing", "arriving"):
            raise ValueError("fcfs_merge_arrival must be 'existing' or 'arriving'")
        if self.osl_window_seconds <= 0:
            raise ValueError("osl_window_seconds must be > 0")

    def with_(self, **changes) -> "EngineConfig":
        return dataclasses.replace(self, **changes)


class Outcome(str, Enum):
    INSERTED = "inserted"  # merging disabled
    NO_MATCH = "no_match"
    MERGED_TASK_LEVEL = "merged_task_level"
    MERGED_LOWER = "merged_lower"
    DECLINED = "declined"


@dataclass(frozen=True)
class AdmissionOutcome:
    outcome: Outcome
    level: SimilarityLevel | None = None
    target: int | None = None
    position: int | None = None
    alpha: float | None = None


@dataclass
class TaskRecord:
    task_id: int
    stream_id: int
    segment_idx: int
    op_type: str
    param: str
    viewer_id: int
    arrival: float
    deadline: float
    exec_mean: float
    exec_sd: float
    entry: int = -1
    level: str = ""
    dispatch: float = math.nan
    completion: float = math.nan

    @property
    def late(self) -> bool:
        return self.completion > self.deadline


RECORD_FIELDS = [f.name for f in dataclasses.fields(TaskRecord)] + ["late"]


@dataclass
class MetricsReport:
    mode: str
    queue_policy: str
    makespan: float
    dmr: float
    total_tasks: int
    late_tasks: int
    merges_task_level: int
    merges_data_and_operation: int
    merges_data_only: int
    declined: int
    impact_evaluations: int
    index_probes: int
    osl_series: list[tuple[float, float]] = field(default_factory=list)
    records: list[TaskRecord] = field(default_factory=list)

    @property
    def merges(self) -> int:
        return self.merges_task_level + self.merges_data_and_operation + self.merges_data_only

    @property
    def mean_osl(self) -> float:
        if not self.osl_series:
            return 0.0
        return sum(v for _, v in self.osl_series) / len(self.osl_series)

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "queue_policy": self.queue_policy,
            "tasks": self.total_tasks,
            "late": self.late_tasks,
            "dmr": self.dmr,
            "makespan": self.makespan,
            "merges_task_level": self.merges_task_level,
            "merges_data_and_operation": self.merges_data_and_operation,
            "merges_data_only": self.merges_data_only,
            "declined": self.declined,
            "impact_evaluations": self.impact_evaluations,
            "mean_osl": self.mean_osl,
        }


class _Machine:
    __slots__ = ("index", "running", "started", "finish", "pending")

    def __init__(self, index: int):
        self.index = index
        self.running: MergedTask | None = None
        self.started = 0.0
        self.finish = 0.0
        self.pending: deque[MergedTask] = deque()

    def view(self, now: float) -> MachineView:
        if self.running is None:
            return MachineView(0.0, 0.0, tuple(self.pending))
        e = self.running
        return MachineView(e.combined_mean - (now - self.started), e.combined_sd, tuple(self.pending))


class Engine:
    """One simulation run. Drive it with :meth:`run`, or step it by hand with
    :meth:`submit`, :meth:`complete_due` and :meth:`dispatch_step`."""

    def __init__(self, config: EngineConfig = EngineConfig()):
        self.config = config
        self.now = 0.0
        self.batch: list[MergedTask] = []
        self.queued: dict[int, MergedTask] = {}
        self.machines = [_Machine(k) for k in range(config.machine_count)]
        self.index = SimilarityIndex()
        self.records: dict[int, TaskRecord] = {}
        self.alpha = config.beta
        self.osl_series: list[tuple[float, float]] = []
        self._completions: list[tuple[float, int, int]] = []
        self._last_osl_sample = -math.inf
        self.merge_counts = {level: 0 for level in SimilarityLevel}
        self.declined = 0
        self.impact_evaluations = 0

    # -- state views -------------------------------------------------------

    def snapshot(self) -> SystemSnapshot:
        return SystemSnapshot(
            self.now,
            tuple(m.view(self.now) for m in self.machines),
            tuple(self.batch),
        )

    def _evaluation_alpha(self) -> float:
        """Coefficient for impact evaluation; Adaptive derives it from the current OSL."""
        cfg = self.config
        if cfg.merge_mode != MergePolicyMode.ADAPTIVE:
            return cfg.beta
        self.alpha = adaptive_alpha(osl(self.snapshot(), cfg.beta).value, cfg.beta)
        return self.alpha

    def _sample_osl(self) -> None:
        if self.now - self._last_osl_sample >= self.config.osl_sample_seconds:
            self.osl_series.append((self.now, osl(self.snapshot(), self.config.beta).value))
            self._last_osl_sample = self.now

    # -- admission ---------------------------------------------------------

    def _insert(self, entry: MergedTask, position: int | None = None) -> int:
        if position is None:
            position = insertion_index(self.batch, entry, self.config.queue_policy, self.config.beta)
        self.batch.insert(position, entry)
        self.queued[entry.qid] = entry
        return position

    def _replace(self, existing: MergedTask, compound: MergedTask, position: int) -> None:
        self.batch.remove(existing)
        self.batch.insert(position, compound)
        self.queued[compound.qid] = compound

    def submit(self, task: Task) -> AdmissionOutcome:
        cfg = self.config
        if task.id in self.records:
            raise ValueError(f"duplicate task id {task.id}")
        if task.arrival != self.now:
            raise ValueError(f"task {task.id} arrives at {task.arrival}, engine is at {self.now}")
        if cfg.sd_scale != 1.0:
            task = dataclasses.replace(task, exec_sd=task.exec_sd * cfg.sd_scale)
        self.records[task.id] = TaskRecord(
            task.id, task.stream_id, task.segment_idx, task.op.op_type.value,
            task.op.param_text, task.viewer_id, task.arrival, task.deadline,
            task.exec_mean, task.exec_sd)

        self._sample_osl()
        if cfg.merge_mode == MergePolicyMode.NO_MERGE:
            self._insert(MergedTask.singleton(task))
            return AdmissionOutcome(Outcome.INSERTED)

        alpha = cfg.beta
        keys = self.index.keys_for(task)
        match = self.index.lookup(task, keys)
        if match is None:
            pos = self._insert(MergedTask.singleton(task))
            self.index.on_admit(task, Admission.NO_MATCH, keys=keys)
            return AdmissionOutcome(Outcome.NO_MATCH, position=pos, alpha=alpha)

        existing = self.queued[match.target]
        take_arrival = (cfg.queue_policy == QueuingPolicy.FCFS
                        and cfg.fcfs_merge_arrival == "arriving")
        compound = existing.merge(task, match.level, cfg.sharing, take_arrival)

        if match.level == SimilarityLevel.TASK_LEVEL:
            pos = position_maintained(self.batch, cfg.queue_policy, compound, existing,
                                      cfg.beta, cfg.fcfs_merge_arrival)
            self._replace(existing, compound, pos)
            self.index.on_admit(task, Admission.MERGED_TASK_LEVEL, match.target, keys)
            return self._merged(task, match.level, compound, pos, alpha)

        if cfg.merge_mode != MergePolicyMode.AGGRESSIVE:
            alpha = self._evaluation_alpha()
        pos = self._place_lower(existing, task, match.level, compound, alpha)
        if pos is None:
            self.declined += 1
            fresh_pos = self._insert(MergedTask.singleton(task))
            self.index.on_admit(task, Admission.NOT_MERGED, keys=keys)
            return AdmissionOutcome(Outcome.DECLINED, match.level, match.target, fresh_pos, alpha)
        self._replace(existing, compound, pos)
        self.index.on_admit(task, Admission.MERGED_LOWER, compound.qid, keys)
        return self._merged(task, match.level, compound, pos, alpha)

    def _place_lower(self, existing: MergedTask, task: Task, level: SimilarityLevel,
                     compound: MergedTask, alpha: float) -> int | None:
        """Slot for a lower-level compound, or None to decline the merge."""
        cfg = self.config
        maintained = position_maintained(self.batch, cfg.queue_policy, compound, existing,
                                         cfg.beta, cfg.fcfs_merge_arrival)
        relaxed = cfg.position_mode == PositionMode.RELAXED
        if cfg.merge_mode == MergePolicyMode.AGGRESSIVE and not relaxed:
            return maintained
        snap = SystemSnapshot(self.now, tuple(m.view(self.now) for m in self.machines),
                              tuple(self.batch))
        if relaxed:
            decision = find_position(cfg.relaxed_heuristic, snap, existing, task, level,
                                     alpha, cfg.queue_policy, cfg.sharing, compound)
            self.impact_evaluations += decision.probes_used
            if decision.placed:
                return decision.index
            return maintained if cfg.merge_mode == MergePolicyMode.AGGRESSIVE else None
        report = evaluate_merge(snap, existing, task, level, maintained, alpha,
                                cfg.queue_policy, cfg.sharing, compound)
        self.impact_evaluations += 1
        return maintained if decide(report) == Decision.MERGE else None

    def _merged(self, task: Task, level: SimilarityLevel, compound: MergedTask,
                pos: int, alpha: float) -> AdmissionOutcome:
        self.merge_counts[level] += 1
        rec = self.records[task.id]
        rec.level = level.name
        return AdmissionOutcome(
            Outcome.MERGED_TASK_LEVEL if level == SimilarityLevel.TASK_LEVEL else Outcome.MERGED_LOWER,
            level, compound.qid, pos, alpha)

    # -- machines ----------------------------------------------------------

    def _start(self, m: _Machine, entry: MergedTask) -> None:
        runtime = sample_runtime(entry.combined_mean, entry.combined_sd, self.config.seed, entry.qid)
        m.running = entry
        m.started = self.now
        m.finish = self.now + runtime
        heapq.heappush(self._completions, (m.finish, m.index, entry.qid))
        for t in entry.members:
            rec = self.records[t.id]
            rec.dispatch = self.now
            rec.entry = entry.qid

    def _dequeue_head(self) -> MergedTask:
        entry = self.batch.pop(0)
        del self.queued[entry.qid]
        self.index.on_dequeue(entry.qid)
        return entry

    def dispatch_step(self) -> list[tuple[int, MergedTask]]:
        """Move work from the batch queue onto machines; return what started."""
        started = []
        depth = self.config.machine_queue_depth
        if depth > 0:
            while self.batch:
                open_machines = [m for m in self.machines if len(m.pending) < depth]
                if not open_machines:
                    break
                target = min(open_machines, key=lambda m: (self._estimated_free(m), m.index))
                target.pending.append(self._dequeue_head())
        for m in self.machines:
            if m.running is not None:
                continue
            if m.pending:
                entry = m.pending.popleft()
            elif depth == 0 and self.batch:
                entry = self._dequeue_head()
            else:
                continue
            self._start(m, entry)
            started.append((m.index, entry))
        return started

    def _estimated_free(self, m: _Machine) -> float:
        a = self.config.beta
        t = self.now
        if m.running is not None:
            t += max(0.0, m.running.estimated_time(a) - (self.now - m.started))
        for e in m.pending:
            t += e.estimated_time(a)
        return t

    def complete_due(self) -> list[MergedTask]:
        """Finish every machine whose run ends at the current time."""
        done = []
        while self._completions and self._completions[0][0] <= self.now:
            finish, k, qid = heapq.heappop(self._completions)
            m = self.machines[k]
            entry = m.running
            m.running = None
            for t in entry.members:
                self.records[t.id].completion = finish
            done.append(entry)
        return done

    @property
    def next_completion(self) -> float:
        return self._completions[0][0] if self._completions else math.inf

    @property
    def idle(self) -> bool:
        return not self.batch and not self._completions and all(not m.pending for m in self.machines)

    # -- driver ------------------------------------------------------------

    def run(self, trace: Sequence[Task]) -> MetricsReport:
        validate_trace(trace)
        i, n = 0, len(trace)
        self.dispatch_step()
        while True:
            next_arrival = trace[i].arrival if i < n else math.inf
            t = min(next_arrival, self.next_completion)
            if t == math.inf:
                break
            self.now = t
            while i < n and trace[i].arrival == t:
                self.submit(trace[i])
                i += 1
            self.complete_due()
            self.dispatch_step()
        return self.report()

    def report(self) -> MetricsReport:
        records = [self.records[k] for k in sorted(self.records)]
        late = sum(1 for r in records if r.late)
        makespan = max((r.completion for r in records), default=0.0)
        return MetricsReport(
            mode=self.config.merge_mode.value,
            queue_policy=self.config.queue_policy.value,
            makespan=makespan,
            dmr=late / len(records) if records else 0.0,
            total_tasks=len(records),
            late_tasks=late,
            merges_task_level=self.merge_counts[SimilarityLevel.TASK_LEVEL],
            merges_data_and_operation=self.merge_counts[SimilarityLevel.DATA_AND_OPERATION],
            merges_data_only=self.merge_counts[SimilarityLevel.DATA_ONLY],
            declined=self.declined,
            impact_evaluations=self.impact_evaluations,
            index_probes=self.index.probes,
            osl_series=list(self.osl_series),
            records=records,
        )


def validate_trace(trace: Sequence[Task]) -> None:
    seen = set()
    last = -math.inf
    for t in trace:
        if t.arrival < last:
            raise ValueError(f"malformed trace: task {t.id} arrives before its predecessor")
        if t.id in seen:
            raise ValueError(f"malformed trace: duplicate task id {t.id}")
        seen.add(t.id)
        last = t.arrival


def run(trace: Sequence[Task], config: EngineConfig = EngineConfig()) -> MetricsReport:
    return Engine(config).run(trace)


@dataclass(frozen=True)
class ComparisonRow:
    mode: str
    dmr: float
    makespan: float
    dmr_reduction: float
    makespan_saving_pct: float
    merges: int


def paired_comparison(trace: Sequence[Task], config: EngineConfig,
                      modes: Iterable[MergePolicyMode]) -> list[ComparisonRow]:
    """Run each mode on the same trace and seed, against a NoMerge baseline."""
    baseline = run(trace, config.with_(merge_mode=MergePolicyMode.NO_MERGE))
    rows = []
    for mode in modes:
        mode = MergePolicyMode(mode)
        rep = baseline if mode == MergePolicyMode.NO_MERGE else run(trace, config.with_(merge_mode=mode))
        rows.append(ComparisonRow(
            mode.value, rep.dmr, rep.makespan,
            baseline.dmr - rep.dmr,
            makespan_saving(baseline.makespan, rep.makespan),
            rep.merges,
        ))
    return rows


def makespan_saving(baseline: float, makespan: float) -> float:
    """Percent of the baseline makespan saved."""
    if baseline <= 0:
        return 0.0
    return 100.0 * (baseline - makespan) / baseline
