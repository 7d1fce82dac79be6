"""Choosing where a compound task goes in the batch queue.

Positions index the batch queue with the existing entry removed, so a
queue of ``n`` other entries offers ``n + 1`` slots.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .impact import ImpactReport, SystemSnapshot, _machine_start, evaluate_merge
from .model import DEFAULT_SHARING, MergedTask, SharingFactors, SimilarityLevel, Task
from .policy import QueuingPolicy, insertion_index


class PositionMode(str, Enum):
    MAINTAINED = "maintained"
    RELAXED = "relaxed"


class Heuristic(str, Enum):
    LINEAR = "linear"
    LOGARITHMIC = "logarithmic"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class PositionDecision:
    index: int | None
    probes_used: int

    @property
    def placed(self) -> bool:
        return self.index is not None

    def __str__(self) -> str:
        what = f"Place({self.index})" if self.placed else "CancelMerge"
        return f"{what} after {self.probes_used} probe(s)"


def appropriate(report: ImpactReport) -> bool:
    """Compound on time and no extra misses among the other tasks."""
    return report.merged_task_meets_deadline and not report.harms_others


def _others(batch: Sequence[MergedTask], existing: MergedTask) -> tuple[MergedTask, ...]:
    batch = tuple(batch)
    i = batch.index(existing)
    return batch[:i] + batch[i + 1:]


def position_maintained(queue: Sequence[MergedTask], policy: QueuingPolicy,
                        compound: MergedTask, existing: MergedTask,
                        alpha: float = 2.0, fcfs_merge_arrival: str = "existing") -> int:
    """Slot the queuing policy itself assigns to the compound.

    FCFS keeps the existing entry's slot, or sends the compound to the tail
    when ``fcfs_merge_arrival == "arriving"``. EDF and Max Urgency re-insert
    the compound by its own key (earliest member deadline; urgency of the
    grown estimate).
    """
    queue = tuple(queue)
    i_idx = queue.index(existing)
    if policy == QueuingPolicy.FCFS:
        if fcfs_merge_arrival == "existing":
            return i_idx
        if fcfs_merge_arrival == "arriving":
            return len(queue) - 1
        raise ValueError(f"fcfs_merge_arrival must be 'existing' or 'arriving', got {fcfs_merge_arrival!r}")
    others = queue[:i_idx] + queue[i_idx + 1:]
    return insertion_index(others, compound, policy, alpha)


def probe_logarithmic(snapshot: SystemSnapshot, existing: MergedTask, arriving: Task,
                      level: SimilarityLevel, alpha: float, policy: QueuingPolicy,
                      sharing: SharingFactors = DEFAULT_SHARING,
                      compound: MergedTask | None = None) -> PositionDecision:
    """Binary search for a slot, starting in the middle of the queue.

    A late compound that hurts nobody moves toward the head; an on-time
    compound that hurts others moves toward the tail; late and harmful
    cancels. The first appropriate slot found is returned.
    """
    if compound is None:
        compound = existing.merge(arriving, level, sharing)
    lo, hi = 0, len(snapshot.batch) - 1
    probes = 0
    while lo <= hi:
        mid = (lo + hi) // 2
        report = evaluate_merge(snapshot, existing, arriving, level, mid, alpha, policy,
                                sharing, compound)
        probes += 1
        late = not report.merged_task_meets_deadline
        harm = report.harms_others
        if not late and not harm:
            return PositionDecision(mid, probes)
        if late and harm:
            break
        if late:
            hi = mid - 1
        else:
            lo = mid + 1
    return PositionDecision(None, probes)


def latest_feasible_slot(snapshot: SystemSnapshot, existing: MergedTask,
                         compound: MergedTask, alpha: float) -> int | None:
    """Last slot where the compound still meets its earliest deadline.

    One pass over the queue: after each entry is placed on the virtual
    machines, check when the compound would finish if it went next.
    """
    others = _others(snapshot.batch, existing)
    heap, _, _ = _machine_start(snapshot, alpha)
    e_c = compound.estimated_time(alpha)
    deadline = compound.earliest_deadline
    last = None
    for p in range(len(others) + 1):
        if heap[0][0] + e_c > deadline:
            break
        last = p
        if p < len(others):
            e = others[p]
            t, k = heap[0]
            heapq.heapreplace(heap, (t + e.estimated_time(alpha), k))
    return last


def probe_linear(snapshot: SystemSnapshot, existing: MergedTask, arriving: Task,
                 level: SimilarityLevel, alpha: float, policy: QueuingPolicy = QueuingPolicy.FCFS,
                 sharing: SharingFactors = DEFAULT_SHARING,
                 compound: MergedTask | None = None) -> PositionDecision:
    """Latest slot that keeps the compound on time, confirmed by one evaluation."""
    if compound is None:
        compound = existing.merge(arriving, level, sharing)
    slot = latest_feasible_slot(snapshot, existing, compound, alpha)
    if slot is None:
        return PositionDecision(None, 0)
    report = evaluate_merge(snapshot, existing, arriving, level, slot, alpha, policy,
                            sharing, compound)
    if report.harms_others or not report.merged_task_meets_deadline:
        return PositionDecision(None, 1)
    return PositionDecision(slot, 1)


def probe_exhaustive(snapshot: SystemSnapshot, existing: MergedTask, arriving: Task,
                     level: SimilarityLevel, alpha: float, policy: QueuingPolicy = QueuingPolicy.FCFS,
                     sharing: SharingFactors = DEFAULT_SHARING,
                     compound: MergedTask | None = None) -> PositionDecision:
    """Evaluate every slot; return the latest appropriate one."""
    slots = appropriate_slots(snapshot, existing, arriving, level, alpha, policy, sharing, compound)
    n = len(snapshot.batch)
    return PositionDecision(slots[-1] if slots else None, n)


def appropriate_slots(snapshot: SystemSnapshot, existing: MergedTask, arriving: Task,
                      level: SimilarityLevel, alpha: float, policy: QueuingPolicy = QueuingPolicy.FCFS,
                      sharing: SharingFactors = DEFAULT_SHARING,
                      compound: MergedTask | None = None) -> list[int]:
    if compound is None:
        compound = existing.merge(arriving, level, sharing)
    out = []
    for p in range(len(snapshot.batch)):
        report = evaluate_merge(snapshot, existing, arriving, level, p, alpha, policy,
                                sharing, compound)
        if appropriate(report):
            out.append(p)
    return out


def find_position(heuristic: Heuristic, snapshot: SystemSnapshot, existing: MergedTask,
                  arriving: Task, level: SimilarityLevel, alpha: float, policy: QueuingPolicy,
                  sharing: SharingFactors = DEFAULT_SHARING,
                  compound: MergedTask | None = None) -> PositionDecision:
    probe = {
        Heuristic.LINEAR: probe_linear,
        Heuristic.LOGARITHMIC: probe_logarithmic,
        Heuristic.EXHAUSTIVE: probe_exhaustive,
    }[Heuristic(heuristic)]
    return probe(snapshot, existing, arriving, level, alpha, policy, sharing, compound)
