"""Task, merged-task and execution-time primitives.

Everything here is an immutable value or a pure function. Times are
simulated seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import cached_property
from typing import Sequence

import numpy as np

# Samples are clamped below at this fraction of the mean.
MIN_RUNTIME_FRACTION = 0.05


class OpType(str, Enum):
    REDUCE_RESOLUTION = "ReduceResolution"
    ADJUST_BIT_RATE = "AdjustBitRate"
    ADJUST_FRAME_RATE = "AdjustFrameRate"
    CHANGE_CODEC = "ChangeCodec"

    @classmethod
    def parse(cls, text: str) -> "OpType":
        for op in cls:
            if op.value.lower() == text.strip().lower() or op.name.lower() == text.strip().lower():
                return op
        raise ValueError(f"unknown operation type {text!r}")


class SimilarityLevel(IntEnum):
    """Mergeability level; a larger value means more shared computation."""

    DATA_ONLY = 1
    DATA_AND_OPERATION = 2
    TASK_LEVEL = 3

    @classmethod
    def parse(cls, text: str) -> "SimilarityLevel":
        key = text.strip().lower().replace("-", "_")
        aliases = {
            "tasklevel": cls.TASK_LEVEL,
            "task_level": cls.TASK_LEVEL,
            "dataandoperation": cls.DATA_AND_OPERATION,
            "data_and_operation": cls.DATA_AND_OPERATION,
            "dataonly": cls.DATA_ONLY,
            "data_only": cls.DATA_ONLY,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown similarity level {text!r}") from None


@dataclass(frozen=True)
class OperationSpec:
    """An operation type plus its parameters.

    Parameters are stripped, lowercased and sorted so that two specs naming
    the same conversion compare (and hash) equal regardless of how the
    viewer spelled them.
    """

    op_type: OpType
    params: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.op_type, OpType):
            object.__setattr__(self, "op_type", OpType.parse(str(self.op_type)))
        if isinstance(self.params, str):
            raise TypeError("params must be a sequence of strings, not a string")
        canonical = tuple(sorted(str(p).strip().lower() for p in self.params))
        if not canonical or any(p == "" for p in canonical):
            raise ValueError("operation params must be non-empty")
        object.__setattr__(self, "params", canonical)

    @property
    def param_text(self) -> str:
        return ";".join(self.params)


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Task:
    id: int
    stream_id: int
    segment_idx: int
    op: OperationSpec
    arrival: float
    deadline: float
    exec_mean: float
    exec_sd: float
    viewer_id: int = 0

    def __post_init__(self):
        _check_finite(arrival=self.arrival, deadline=self.deadline,
                      exec_mean=self.exec_mean, exec_sd=self.exec_sd)
        if self.exec_mean <= 0:
            raise ValueError(f"task {self.id}: exec_mean must be > 0")
        if self.exec_sd < 0:
            raise ValueError(f"task {self.id}: exec_sd must be >= 0")

    def estimated_time(self, alpha: float) -> float:
        return estimated_execution_time(self.exec_mean, self.exec_sd, alpha)

    def waitable(self, alpha: float) -> float:
        return waitable_time(self.arrival, self.deadline, self.estimated_time(alpha))


@dataclass(frozen=True)
class SharingFactors:
    """Fraction of a joiner's mean runtime that a lower-level merge still costs.

    The defaults put a two-task data-only merge at a 35% saving and a
    data-and-operation merge at 40%, keeping data-only the weakest level.
    """

    data_and_operation: float = 0.2
    data_only: float = 0.3

    def __post_init__(self):
        for name in ("data_and_operation", "data_only"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"sharing factor {name} must lie in [0, 1], got {v}")

    def factor(self, level: SimilarityLevel) -> float:
        if level == SimilarityLevel.DATA_AND_OPERATION:
            return self.data_and_operation
        if level == SimilarityLevel.DATA_ONLY:
            return self.data_only
        if level == SimilarityLevel.TASK_LEVEL:
            return 0.0
        raise ValueError(f"unknown similarity level {level!r}")


DEFAULT_SHARING = SharingFactors()


@dataclass(frozen=True, eq=False)
class MergedTask:
    """A batch-queue entry: one task or several tasks executed together.

    Every member keeps its own deadline. ``arrival`` is the time the queue
    orders the entry by under FCFS. Identity (not field equality) is used
    for comparisons, so a queue can locate an entry with ``list.index``.
    """

    members: tuple[Task, ...]
    level_links: tuple[SimilarityLevel, ...]
    combined_mean: float
    combined_sd: float
    arrival: float

    def __post_init__(self):
        if not self.members:
            raise ValueError("a merged task needs at least one member")
        if len(self.level_links) != len(self.members) - 1:
            raise ValueError("level_links must have one entry per joined member")

    @classmethod
    def singleton(cls, task: Task) -> "MergedTask":
        return cls((task,), (), task.exec_mean, task.exec_sd, task.arrival)

    @property
    def qid(self) -> int:
        """Stable handle: the id of the first member."""
        return self.members[0].id

    @cached_property
    def deadlines(self) -> tuple[float, ...]:
        return tuple(sorted(t.deadline for t in self.members))

    @property
    def earliest_deadline(self) -> float:
        return self.deadlines[0]

    def estimated_time(self, alpha: float) -> float:
        return estimated_execution_time(self.combined_mean, self.combined_sd, alpha)

    def merge(self, joiner: Task, level: SimilarityLevel,
              sharing: SharingFactors = DEFAULT_SHARING,
              take_arrival: bool = False) -> "MergedTask":
        """Return the compound of this entry and ``joiner``.

        ``take_arrival`` makes the compound adopt the joiner's arrival time
        for FCFS ordering instead of keeping its own.
        """
        mean, sd = merged_cost(self, joiner, level, sharing)
        return MergedTask(
            self.members + (joiner,),
            self.level_links + (SimilarityLevel(level),),
            mean,
            sd,
            joiner.arrival if take_arrival else self.arrival,
        )

    def __repr__(self) -> str:
        ids = ",".join(str(t.id) for t in self.members)
        return (f"MergedTask(qid={self.qid}, members=[{ids}], "
                f"mean={self.combined_mean:.4g}, sd={self.combined_sd:.4g})")


def estimated_execution_time(mean: float, sd: float, alpha: float) -> float:
    """``mean + alpha * sd``, never negative."""
    _check_finite(mean=mean, sd=sd, alpha=alpha)
    if sd < 0:
        raise ValueError("sd must be >= 0")
    e = mean + alpha * sd
    return e if e > 0.0 else 0.0


def urgency(deadline: float, est_exec: float) -> float:
    """``1 / (deadline - est_exec)``; ``math.inf`` once no slack remains.

    Ties among infinite urgencies are broken by the caller (smaller
    deadline first).
    """
    slack = deadline - est_exec
    if slack <= 0:
        return math.inf
    return 1.0 / slack


def waitable_time(arrival: float, deadline: float, est_exec: float) -> float:
    return deadline - arrival - est_exec


def merged_cost(base: MergedTask, joiner: Task, level: SimilarityLevel,
                sharing: SharingFactors = DEFAULT_SHARING) -> tuple[float, float]:
    """Mean and standard deviation of ``base`` after absorbing ``joiner``.

    A task-level joiner is free. Otherwise the larger of the two jobs is paid
    in full and the smaller one adds ``rho`` times its mean (and ``rho``
    times its sd, in quadrature), with ``rho`` the sharing factor of the
    level. For equal means this is ``mean + rho * mean``; charging the larger
    job in full keeps a compound at least as long as any of its members.
    """
    if not isinstance(level, SimilarityLevel):
        try:
            level = SimilarityLevel(level)
        except ValueError:
            raise ValueError(f"unknown similarity level {level!r}") from None
    if level == SimilarityLevel.TASK_LEVEL:
        return base.combined_mean, base.combined_sd
    rho = sharing.factor(level)
    big, small = (base.combined_mean, base.combined_sd), (joiner.exec_mean, joiner.exec_sd)
    if small[0] > big[0]:
        big, small = small, big
    return big[0] + rho * small[0], math.hypot(big[1], rho * small[1])


def standard_normal_draw(seed: int, key: int) -> float:
    """One N(0, 1) draw that depends only on ``(seed, key)``."""
    return float(np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, key & 0xFFFFFFFFFFFFFFFF])
                 .standard_normal())


def sample_runtime(mean: float, sd: float, seed: int, key: int) -> float:
    """Actual runtime for one dispatch.

    Normal(mean, sd) clamped below at ``MIN_RUNTIME_FRACTION * mean``. The
    draw is keyed on ``(seed, key)`` so that the same queue entry sees the
    same standard-normal deviate in every run sharing the seed.
    """
    if sd == 0:
        return mean
    z = standard_normal_draw(seed, key)
    return max(MIN_RUNTIME_FRACTION * mean, mean + z * sd)


def sharing_saving(rho: float) -> float:
    """Fraction of two equal tasks' combined time saved by merging them."""
    return 1.0 - (1.0 + rho) / 2.0


def group_members(entries: Sequence[MergedTask]) -> list[Task]:
    return [t for e in entries for t in e.members]
