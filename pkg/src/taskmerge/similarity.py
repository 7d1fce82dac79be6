"""Three-level hash index over the tasks waiting in the batch queue.

Each level has its own table mapping a key digest to the handle (qid) of
one queued entry. Lookups probe the task level first, then data-and-
operation, then data-only, and confirm every hit by comparing the
canonical key material so that a digest collision can only lose a match,
never produce a wrong one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, NamedTuple

from .model import SimilarityLevel, Task

LEVELS_HIGH_TO_LOW = (
    SimilarityLevel.TASK_LEVEL,
    SimilarityLevel.DATA_AND_OPERATION,
    SimilarityLevel.DATA_ONLY,
)


class IndexStateError(RuntimeError):
    """The engine reported an admission outcome that contradicts the index."""


def _blake_digest(material: str) -> int:
    return int.from_bytes(hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest(), "big")


@dataclass(frozen=True)
class LevelKeys:
    task_key: int
    data_op_key: int
    data_key: int
    task_material: str
    data_op_material: str
    data_material: str

    def key(self, level: SimilarityLevel) -> tuple[int, str]:
        if level == SimilarityLevel.TASK_LEVEL:
            return self.task_key, self.task_material
        if level == SimilarityLevel.DATA_AND_OPERATION:
            return self.data_op_key, self.data_op_material
        return self.data_key, self.data_material


def key_material(task: Task) -> tuple[str, str, str]:
    data = f"{task.stream_id}|{task.segment_idx}"
    data_op = f"{data}|{task.op.op_type.value}"
    return f"{data_op}|{','.join(task.op.params)}", data_op, data


def make_keys(task: Task, hash_fn: Callable[[str], int] = _blake_digest) -> LevelKeys:
    full, data_op, data = key_material(task)
    return LevelKeys(hash_fn(full), hash_fn(data_op), hash_fn(data), full, data_op, data)


def similarity(a: Task, b: Task) -> SimilarityLevel | None:
    """Highest level at which two tasks are mergeable, by direct comparison."""
    if (a.stream_id, a.segment_idx) != (b.stream_id, b.segment_idx):
        return None
    if a.op.op_type != b.op.op_type:
        return SimilarityLevel.DATA_ONLY
    if a.op.params != b.op.params:
        return SimilarityLevel.DATA_AND_OPERATION
    return SimilarityLevel.TASK_LEVEL


class Admission(Enum):
    MERGED_TASK_LEVEL = "merged_task_level"
    MERGED_LOWER = "merged_lower"
    NOT_MERGED = "not_merged"
    NO_MATCH = "no_match"


class Match(NamedTuple):
    level: SimilarityLevel
    target: int


class SimilarityIndex:
    """Key -> queued-entry index, one table per similarity level.

    Targets are queue handles (``MergedTask.qid``). A compound keeps the
    handle of the entry it grew from, so merging never has to rewrite the
    entries that already point at it.
    """

    def __init__(self, hash_fn: Callable[[str], int] = _blake_digest):
        self._hash_fn = hash_fn
        self._tables: dict[SimilarityLevel, dict[int, tuple[str, int]]] = {
            level: {} for level in LEVELS_HIGH_TO_LOW
        }
        self._by_target: dict[int, set[tuple[SimilarityLevel, int]]] = {}
        self.probes = 0
        self.lookups = 0

    def keys_for(self, task: Task) -> LevelKeys:
        return make_keys(task, self._hash_fn)

    def lookup(self, task: Task, keys: LevelKeys | None = None) -> Match | None:
        """Highest-level queued match for an arriving task, or None."""
        self.lookups += 1
        keys = keys or self.keys_for(task)
        for level in LEVELS_HIGH_TO_LOW:
            digest, material = keys.key(level)
            self.probes += 1
            entry = self._tables[level].get(digest)
            if entry is not None and entry[0] == material:
                return Match(level, entry[1])
        return None

    def _peek(self, keys: LevelKeys) -> Match | None:
        for level in LEVELS_HIGH_TO_LOW:
            digest, material = keys.key(level)
            entry = self._tables[level].get(digest)
            if entry is not None and entry[0] == material:
                return Match(level, entry[1])
        return None

    def _put(self, level: SimilarityLevel, digest: int, material: str, target: int) -> None:
        table = self._tables[level]
        old = table.get(digest)
        if old is not None and old[1] != target:
            self._by_target[old[1]].discard((level, digest))
            if not self._by_target[old[1]]:
                del self._by_target[old[1]]
        table[digest] = (material, target)
        self._by_target.setdefault(target, set()).add((level, digest))

    def _put_all(self, keys: LevelKeys, target: int) -> None:
        for level in LEVELS_HIGH_TO_LOW:
            digest, material = keys.key(level)
            self._put(level, digest, material, target)

    def on_admit(self, arriving: Task, outcome: Admission, target: int | None = None,
                 keys: LevelKeys | None = None) -> None:
        """Apply the table update for one admission.

        ``target`` is the handle of the compound for ``MERGED_LOWER`` and of
        the matched entry for ``MERGED_TASK_LEVEL``; it is ignored otherwise
        (the arriving task's own id is its handle).
        """
        keys = keys or self.keys_for(arriving)
        match = self._peek(keys)
        if outcome == Admission.MERGED_TASK_LEVEL:
            if match is None or match.level != SimilarityLevel.TASK_LEVEL:
                raise IndexStateError(f"task {arriving.id}: task-level merge without a task-level entry")
            if target is not None and match.target != target:
                raise IndexStateError(f"task {arriving.id}: task-level merge into {target}, index says {match.target}")
            return
        if outcome == Admission.MERGED_LOWER:
            if match is None or match.level == SimilarityLevel.TASK_LEVEL:
                raise IndexStateError(f"task {arriving.id}: lower-level merge without a lower-level match")
            if target is None or match.target != target:
                raise IndexStateError(f"task {arriving.id}: merged into {target}, index matched {match and match.target}")
            self._put_all(keys, target)
            return
        if outcome == Admission.NOT_MERGED:
            if match is None:
                raise IndexStateError(f"task {arriving.id}: declined merge but nothing matched")
            self._put_all(keys, arriving.id)
            return
        if outcome == Admission.NO_MATCH:
            if match is not None:
                raise IndexStateError(f"task {arriving.id}: reported no match but index matched {match.target}")
            self._put_all(keys, arriving.id)
            return
        raise IndexStateError(f"unknown admission outcome {outcome!r}")

    def on_dequeue(self, target: int) -> None:
        """Drop every entry pointing at ``target``."""
        for level, digest in self._by_target.pop(target, ()):
            table = self._tables[level]
            entry = table.get(digest)
            if entry is not None and entry[1] == target:
                del table[digest]

    def entries(self) -> Iterator[tuple[SimilarityLevel, int, str, int]]:
        """(level, digest, material, target) for every live entry."""
        for level in LEVELS_HIGH_TO_LOW:
            for digest, (material, target) in self._tables[level].items():
                yield level, digest, material, target

    def targets(self) -> set[int]:
        return set(self._by_target)

    def __len__(self) -> int:
        return sum(len(t) for t in self._tables.values())

    def state(self) -> tuple:
        """Hashable picture of the tables, for before/after comparisons."""
        return tuple(
            tuple(sorted(self._tables[level].items())) for level in LEVELS_HIGH_TO_LOW
        )
