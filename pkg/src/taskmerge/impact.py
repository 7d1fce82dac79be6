"""Merge-impact evaluation over a virtual copy of the machine queues.

Completion times are worst-case point estimates: every queued entry costs
``mean + alpha * sd`` (clamped at zero). Batch-queue entries are handed out
in queue order, each to the machine that becomes free first (lowest index
on ties), which is exactly what the live engine does when estimates are
exact.
"""

from __future__ import annotations

import heapq
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .model import (
    DEFAULT_SHARING,
    MergedTask,
    SharingFactors,
    SimilarityLevel,
    Task,
)
from .policy import QueuingPolicy, insertion_index


@dataclass(frozen=True)
class MachineView:
    """One machine as the evaluator sees it.

    ``remaining_mean`` is the in-service entry's mean runtime minus the time
    it has already run (it may be negative once the task overruns its mean);
    ``remaining_sd`` is that entry's standard deviation. An idle machine has
    both at zero.
    """

    remaining_mean: float = 0.0
    remaining_sd: float = 0.0
    pending: tuple[MergedTask, ...] = ()

    def remaining(self, alpha: float) -> float:
        r = self.remaining_mean + alpha * self.remaining_sd
        return r if r > 0.0 else 0.0


@dataclass(frozen=True)
class SystemSnapshot:
    now: float
    machines: tuple[MachineView, ...]
    batch: tuple[MergedTask, ...]

    def __post_init__(self):
        if not self.machines:
            raise ValueError("a snapshot needs at least one machine")


def _est(mean: float, sd: float, alpha: float) -> float:
    e = mean + alpha * sd
    return e if e > 0.0 else 0.0


def completion_time(snapshot: SystemSnapshot, machine: int,
                    queue_prefix: Sequence[tuple[float, float]],
                    candidate: tuple[float, float], alpha: float) -> float:
    """Estimated completion of ``candidate`` behind ``queue_prefix`` on ``machine``.

    >>> snap = SystemSnapshot(100.0, (MachineView(5.0),), ())
    >>> completion_time(snap, 0, [(10, 1), (20, 2)], (10, 1), 2.0)
    153.0
    """
    c = snapshot.now + snapshot.machines[machine].remaining(alpha)
    for mu, sd in queue_prefix:
        c += _est(mu, sd, alpha)
    return c + _est(candidate[0], candidate[1], alpha)


def _machine_start(snapshot: SystemSnapshot, alpha: float) -> tuple[list[tuple[float, int]], int, list[float]]:
    """Availability heap after machine-local queues drain, plus their misses."""
    heap = []
    misses = 0
    completions = []
    for k, m in enumerate(snapshot.machines):
        t = snapshot.now + m.remaining(alpha)
        for e in m.pending:
            t += _est(e.combined_mean, e.combined_sd, alpha)
            completions.append(t)
            misses += bisect_left(e.deadlines, t)
        heap.append((t, k))
    heapq.heapify(heap)
    return heap, misses, completions


def virtual_completions(snapshot: SystemSnapshot, entries: Sequence[MergedTask],
                        alpha: float) -> list[float]:
    """Estimated completion of each entry when dispatched in the given order."""
    heap, _, _ = _machine_start(snapshot, alpha)
    out = []
    for e in entries:
        c = heap[0][0] + _est(e.combined_mean, e.combined_sd, alpha)
        heapq.heapreplace(heap, (c, heap[0][1]))
        out.append(c)
    return out


def pending_completions(snapshot: SystemSnapshot, alpha: float) -> list[float]:
    """Estimated completions of machine-local queue entries, machine by machine."""
    return _machine_start(snapshot, alpha)[2]


def _walk(heap: list, entries: Sequence[MergedTask], alpha: float,
          watch: tuple[MergedTask, ...] = ()) -> tuple[int, int, float]:
    """Dispatch ``entries`` onto ``heap`` in place.

    Returns total misses, misses among ``watch`` entries, and the completion
    of the last watched entry seen.
    """
    misses = 0
    watched_misses = 0
    watched_at = -1.0
    replace = heapq.heapreplace
    for e in entries:
        t, k = heap[0]
        d = e.combined_mean + alpha * e.combined_sd
        c = t + d if d > 0.0 else t
        replace(heap, (c, k))
        dl = e.deadlines
        late = bisect_left(dl, c) if c > dl[0] else 0
        misses += late
        if watch and e in watch:
            watched_misses += late
            watched_at = c
    return misses, watched_misses, watched_at


def count_misses(snapshot: SystemSnapshot, entries: Sequence[MergedTask], alpha: float) -> int:
    """Members estimated late when ``entries`` replace the batch queue."""
    heap, misses, _ = _machine_start(snapshot, alpha)
    return misses + _walk(heap, entries, alpha)[0]


@dataclass(frozen=True)
class TaskVerdict:
    task_id: int
    deadline: float
    completion_with: float
    completion_without: float

    @property
    def late_with(self) -> bool:
        return self.completion_with > self.deadline

    @property
    def late_without(self) -> bool:
        return self.completion_without > self.deadline


@dataclass(frozen=True)
class ImpactReport:
    misses_with_merge: int
    misses_without_merge: int
    merged_task_meets_deadline: bool
    others_misses_with: int
    others_misses_without: int
    position: int
    compound_completion: float
    verdicts: tuple[TaskVerdict, ...] = field(default=(), compare=False)

    @property
    def harms_others(self) -> bool:
        return self.others_misses_with > self.others_misses_without


class Decision(str, Enum):
    MERGE = "Merge"
    DECLINE = "Decline"


def decide(report: ImpactReport) -> Decision:
    """Merge unless merging is estimated to add deadline misses (ties merge)."""
    if report.misses_with_merge <= report.misses_without_merge:
        return Decision.MERGE
    return Decision.DECLINE


def _locate(batch: Sequence[MergedTask], existing: MergedTask) -> int:
    try:
        return batch.index(existing)
    except ValueError:
        pass
    raise ValueError(f"{existing!r} is not in the snapshot's batch queue")


def branches(snapshot: SystemSnapshot, existing: MergedTask, arriving: Task,
             compound: MergedTask, position: int, policy: QueuingPolicy,
             alpha: float) -> tuple[tuple[MergedTask, ...], tuple[MergedTask, ...], int, int, MergedTask]:
    """Build the two candidate batch queues.

    Returns the queue with the compound at ``position``, the queue with the
    arriving task inserted on its own, the index of ``existing``, the index
    of the arriving task in the second queue, and that singleton entry.
    """
    batch = snapshot.batch
    i_idx = _locate(batch, existing)
    others = batch[:i_idx] + batch[i_idx + 1:]
    if not 0 <= position <= len(others):
        raise IndexError(f"position {position} outside [0, {len(others)}]")
    with_merge = others[:position] + (compound,) + others[position:]
    fresh = MergedTask.singleton(arriving)
    j_pos = insertion_index(batch, fresh, policy, alpha)
    without_merge = batch[:j_pos] + (fresh,) + batch[j_pos:]
    return with_merge, without_merge, i_idx, j_pos, fresh


def evaluate_merge(snapshot: SystemSnapshot, existing: MergedTask, arriving: Task,
                   level: SimilarityLevel, position: int, alpha: float,
                   policy: QueuingPolicy, sharing: SharingFactors = DEFAULT_SHARING,
                   compound: MergedTask | None = None, detail: bool = False) -> ImpactReport:
    """Count estimated deadline misses with and without merging ``arriving``
    into ``existing``.

    ``position`` indexes the batch queue with ``existing`` removed (so it
    ranges over ``0..len(batch) - 1``). In the no-merge branch the arriving
    task sits where ``policy`` would insert it. Both branches count every
    queued task individually against its own deadline.
    """
    if level == SimilarityLevel.TASK_LEVEL:
        raise ValueError("task-level merges are never evaluated")
    if compound is None:
        compound = existing.merge(arriving, level, sharing)
    with_merge, without_merge, i_idx, j_pos, fresh = branches(
        snapshot, existing, arriving, compound, position, policy, alpha)

    # Both branches agree up to the first slot that differs.
    shared = min(position, i_idx, j_pos)
    heap, base_misses, _ = _machine_start(snapshot, alpha)
    prefix_misses = _walk(heap, with_merge[:shared], alpha)[0]
    heap_with = list(heap)
    miss_with, compound_misses, c_compound = _walk(
        heap_with, with_merge[shared:], alpha, (compound,))
    miss_without, pair_without, _ = _walk(
        heap, without_merge[shared:], alpha, (existing, fresh))
    total_with = base_misses + prefix_misses + miss_with
    total_without = base_misses + prefix_misses + miss_without

    verdicts: tuple[TaskVerdict, ...] = ()
    if detail:
        verdicts = _verdicts(snapshot, with_merge, without_merge, alpha)
    return ImpactReport(
        misses_with_merge=total_with,
        misses_without_merge=total_without,
        merged_task_meets_deadline=c_compound <= compound.earliest_deadline,
        others_misses_with=total_with - compound_misses,
        others_misses_without=total_without - pair_without,
        position=position,
        compound_completion=c_compound,
        verdicts=verdicts,
    )


def _verdicts(snapshot: SystemSnapshot, with_merge: Sequence[MergedTask],
              without_merge: Sequence[MergedTask], alpha: float) -> tuple[TaskVerdict, ...]:
    def per_task(entries):
        out = {}
        for e, c in zip(entries, virtual_completions(snapshot, entries, alpha)):
            for t in e.members:
                out[t.id] = (t.deadline, c)
        return out

    w = per_task(with_merge)
    wo = per_task(without_merge)
    return tuple(
        TaskVerdict(tid, w[tid][0], w[tid][1], wo[tid][1]) for tid in sorted(w)
    )
