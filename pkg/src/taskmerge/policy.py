"""Batch-queue ordering under FCFS, EDF and Max Urgency."""

from __future__ import annotations

import bisect
import math
from enum import Enum
from typing import Callable, Sequence

from .model import MergedTask, urgency


class QueuingPolicy(str, Enum):
    FCFS = "FCFS"
    EDF = "EDF"
    MAX_URGENCY = "MaxUrgency"

    @classmethod
    def parse(cls, text: str) -> "QueuingPolicy":
        key = text.strip().lower().replace("_", "").replace("-", "")
        for p in cls:
            if key in (p.value.lower(), p.name.lower().replace("_", "")):
                return p
        if key == "mu":
            return cls.MAX_URGENCY
        raise ValueError(f"unknown queuing policy {text!r}")


def sort_key(policy: QueuingPolicy, alpha: float) -> Callable[[MergedTask], tuple]:
    """Key function whose ascending order is dispatch order.

    Every key ends with the entry's qid, so the order is total.
    """
    if policy == QueuingPolicy.FCFS:
        return lambda e: (e.arrival, e.qid)
    if policy == QueuingPolicy.EDF:
        return lambda e: (e.earliest_deadline, e.qid)
    if policy == QueuingPolicy.MAX_URGENCY:
        def key(e: MergedTask) -> tuple:
            d = e.earliest_deadline
            u = urgency(d, e.estimated_time(alpha))
            # Infinite urgencies sort first, smaller deadline first among them.
            return (-u, d, e.qid) if u != math.inf else (-math.inf, d, e.qid)
        return key
    raise ValueError(f"unknown queuing policy {policy!r}")


def insertion_index(queue: Sequence[MergedTask], item: MergedTask,
                    policy: QueuingPolicy, alpha: float) -> int:
    """Where ``item`` goes in ``queue`` as a fresh arrival.

    FCFS appends. EDF and Max Urgency bisect on the policy key; if the queue
    has been reordered by relaxed placement the result is still
    deterministic, just not globally sorted.
    """
    if policy == QueuingPolicy.FCFS:
        return len(queue)
    key = sort_key(policy, alpha)
    return bisect.bisect_right(queue, key(item), key=key)


def comes_before(a: MergedTask, b: MergedTask, policy: QueuingPolicy, alpha: float) -> bool:
    key = sort_key(policy, alpha)
    return key(a) < key(b)
