"""Oversubscription level and the adaptive standard-deviation coefficient."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable

from .impact import SystemSnapshot, _est


@dataclass(frozen=True)
class OslReading:
    value: float
    sample_count: int
    window: str = "current-estimate"


def _contribution(arrival: float, deadline: float, est: float, completion: float) -> float:
    waitable = deadline - arrival - est
    if waitable <= 0 or completion <= deadline:
        return 0.0
    return (completion - deadline) / waitable


def osl(snapshot: SystemSnapshot, beta: float = 2.0) -> OslReading:
    """Mean deadline-miss severity over every queued task.

    Completion estimates use ``alpha = beta``. Queued tasks are those in
    machine-local queues and in the batch queue; members of a compound are
    counted one by one, each with its own waitable time.
    """
    alpha = beta
    total = 0.0
    count = 0
    t_now = snapshot.now
    heap = []
    for k, m in enumerate(snapshot.machines):
        t = t_now + m.remaining(alpha)
        for e in m.pending:
            t += _est(e.combined_mean, e.combined_sd, alpha)
            for task in e.members:
                total += _contribution(task.arrival, task.deadline,
                                       _est(task.exec_mean, task.exec_sd, alpha), t)
                count += 1
        heap.append((t, k))
    heapq.heapify(heap)
    replace = heapq.heapreplace
    for e in snapshot.batch:
        t, k = heap[0]
        d = e.combined_mean + alpha * e.combined_sd
        c = t + d if d > 0.0 else t
        replace(heap, (c, k))
        for task in e.members:
            count += 1
            if c > task.deadline:
                total += _contribution(task.arrival, task.deadline,
                                       _est(task.exec_mean, task.exec_sd, alpha), c)
    return OslReading(total / count if count else 0.0, count)


@dataclass(frozen=True)
class CompletionRecord:
    arrival: float
    deadline: float
    est_exec: float
    completion: float


def osl_observed(records: Iterable[CompletionRecord], window_end: float | None = None,
                 window_seconds: float | None = None) -> OslReading:
    """Same severity average over observed completions.

    With ``window_seconds`` set, only records completing within
    ``(window_end - window_seconds, window_end]`` count.
    """
    total = 0.0
    count = 0
    for r in records:
        if window_seconds is not None and window_end is not None:
            if not (window_end - window_seconds < r.completion <= window_end):
                continue
        total += _contribution(r.arrival, r.deadline, r.est_exec, r.completion)
        count += 1
    return OslReading(total / count if count else 0.0, count, "past-observed")


def adaptive_alpha(osl_value: float, beta: float = 2.0) -> float:
    """``beta - 2 * beta * osl`` with ``osl`` clamped to [0, 1]."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    clamped = min(1.0, max(0.0, osl_value))
    return beta - 2.0 * beta * clamped


def arrival_processing_ratio(arrived_work: float, capacity_seconds: float) -> float:
    """Offered work over available machine time; reported only, never a control input."""
    return arrived_work / capacity_seconds if capacity_seconds > 0 else 0.0
