"""Synthetic video-transcoding traces, and the trace file format.

A trace is built from viewer sessions. Each session streams one video from
a repository (``streams`` videos, each cut into 5-110 two-second
segments) with one operation, and submits its segments in groups of five
consecutive segments. Group submissions follow a rate that toggles between
a base period and a high period at twice the base rate; a fixed number of
tasks lands in a fixed time interval, so more tasks means more load.

With probability ``overlap_probability`` a new session replays a video
some earlier session already requested, which is where merge
opportunities come from.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import OperationSpec, OpType, Task

TRACE_HEADER = ["id", "stream_id", "segment_idx", "op_type", "param", "arrival_s",
                "mu_s", "sigma_s", "deadline_s", "viewer_id"]


class TraceFormatError(ValueError):
    def __init__(self, line: int, column: int | None, message: str):
        where = f"line {line}" + (f", column {column} ({TRACE_HEADER[column - 1]})" if column else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column


# Mean runtimes in seconds per (operation, parameter). Frame-rate changes are
# the cheapest operation and codec changes cost 8x as much.
DEFAULT_PROFILE: dict[tuple[OpType, str], float] = {
    (OpType.ADJUST_FRAME_RATE, "30fps"): 1.0,
    (OpType.ADJUST_FRAME_RATE, "24fps"): 1.0,
    (OpType.REDUCE_RESOLUTION, "720p"): 2.0,
    (OpType.REDUCE_RESOLUTION, "480p"): 1.6,
    (OpType.ADJUST_BIT_RATE, "2m"): 2.4,
    (OpType.ADJUST_BIT_RATE, "1m"): 2.2,
    (OpType.CHANGE_CODEC, "h265"): 8.0,
    (OpType.CHANGE_CODEC, "vp9"): 8.0,
}


@dataclass(frozen=True)
class ExecProfile:
    means: tuple[tuple[OpType, str, float], ...] = tuple(
        (op, p, mu) for (op, p), mu in DEFAULT_PROFILE.items())

    def __post_init__(self):
        if not self.means:
            raise ValueError("execution profile is empty")
        for op, p, mu in self.means:
            if not mu > 0:
                raise ValueError(f"profile mean for {op.value}/{p} must be > 0")

    @property
    def operations(self) -> list[tuple[OpType, str]]:
        return [(op, p) for op, p, _ in self.means]

    def mean(self, op: OpType, param: str) -> float:
        for o, p, mu in self.means:
            if o == op and p == param:
                return mu
        raise KeyError(f"no profile entry for {op.value}/{param}")


@dataclass(frozen=True)
class DeadlineModel:
    """``streaming``: segment k of a session is due at the session's first
    arrival + ``startup_delay`` + k * ``segment_duration``.
    ``slack``: due at arrival + ``slack_factor`` * mean runtime."""

    kind: str = "streaming"
    startup_delay: float = 6.0
    segment_duration: float = 2.0
    slack_factor: float = 3.0

    def __post_init__(self):
        if self.kind not in ("streaming", "slack"):
            raise ValueError(f"deadline model must be 'streaming' or 'slack', got {self.kind!r}")
        if self.startup_delay <= 0:
            raise ValueError("startup_delay must be > 0")
        if self.segment_duration <= 0:
            raise ValueError("segment_duration must be > 0")
        if self.slack_factor <= 0:
            raise ValueError("slack_factor must be > 0")


@dataclass(frozen=True)
class WorkloadSpec:
    total_tasks: int | None = 1000
    streams: int = 400
    segments_min: int = 5
    segments_max: int = 110
    segment_duration: float = 2.0
    group_size: int = 5
    high_duration: float = 12.0
    base_to_high_duration: float = 3.0
    high_rate_factor: float = 2.0
    cycles: int = 15
    overlap_probability: float = 0.35
    # Share of replays that join a video another session is streaming right
    # now, instead of starting it from the first segment.
    live_join_fraction: float = 0.5
    # Group submissions per session run at playback speed times this factor.
    pace: float = 1.0
    content_jitter: float = 0.2
    sd_fraction: float = 0.04
    sd_scale: float = 1.0
    profile: ExecProfile = field(default_factory=ExecProfile)
    op_weights: tuple[float, ...] | None = None
    deadlines: DeadlineModel = field(default_factory=DeadlineModel)
    seed: int = 0

    def validate(self) -> None:
        if self.streams < 1:
            raise ValueError("streams must be >= 1")
        if self.total_tasks is not None and self.total_tasks < 1:
            raise ValueError("total_tasks must be >= 1")
        if not 1 <= self.segments_min <= self.segments_max:
            raise ValueError("need 1 <= segments_min <= segments_max")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.cycles < 1 or self.high_duration <= 0 or self.base_to_high_duration <= 0:
            raise ValueError("cycle shape must be positive")
        if self.high_rate_factor <= 0:
            raise ValueError("high_rate_factor must be > 0")
        if not 0.0 <= self.overlap_probability <= 1.0:
            raise ValueError("overlap_probability must lie in [0, 1]")
        if not 0.0 <= self.live_join_fraction <= 1.0:
            raise ValueError("live_join_fraction must lie in [0, 1]")
        if self.pace <= 0:
            raise ValueError("pace must be > 0")
        if not 0.0 <= self.content_jitter < 1.0:
            raise ValueError("content_jitter must lie in [0, 1)")
        if self.sd_fraction < 0 or self.sd_scale < 0:
            raise ValueError("sd_fraction and sd_scale must be >= 0")
        if self.segment_duration <= 0:
            raise ValueError("segment_duration must be > 0")
        if self.op_weights is not None:
            if len(self.op_weights) != len(self.profile.means):
                raise ValueError("op_weights needs one weight per profile entry")
            if min(self.op_weights) < 0 or sum(self.op_weights) <= 0:
                raise ValueError("op_weights must be non-negative and not all zero")

    @property
    def horizon(self) -> float:
        return self.cycles * self.high_duration * (1.0 + self.base_to_high_duration)


@dataclass
class _Session:
    viewer: int
    video: int
    op: tuple[OpType, str]
    first_segment: int
    segments: int
    group_size: int
    next_group: int = 0
    # Viewers who joined this stream and submit alongside it.
    companions: list["_Session"] = field(default_factory=list)

    @property
    def groups(self) -> int:
        return -(-self.segments // self.group_size)


def _arrival_times(spec: WorkloadSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` sorted times in whole milliseconds, iid with density
    proportional to the rate. Each cycle is a base period followed by a
    high period."""
    high = spec.high_duration
    base = high * spec.base_to_high_duration
    cycle = high + base
    high_mass = high * spec.high_rate_factor
    cycle_mass = base + high_mass
    u = rng.random(count) * cycle_mass * spec.cycles
    k = np.floor(u / cycle_mass)
    r = u - k * cycle_mass
    offset = np.where(r < base, r, base + (r - base) / spec.high_rate_factor)
    t_ms = np.round((k * cycle + offset) * 1000.0).astype(np.int64)
    t_ms.sort()
    return t_ms


def in_high_period(spec: WorkloadSpec, t: float) -> bool:
    high = spec.high_duration
    base = high * spec.base_to_high_duration
    return (t % (high + base)) >= base


class _Planner:
    """Hands out viewer sessions and the order in which they submit groups.

    Sessions occupy lanes; arrival slots go to lanes round-robin, so the
    plan depends only on slot order and arrival times can be drawn after.
    A replaying session either joins a stream another lane is serving and
    submits its groups in the same slots, or restarts a watched video from
    its first segment in a lane of its own.
    """

    def __init__(self, spec: WorkloadSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.lengths = rng.integers(spec.segments_min, spec.segments_max + 1, size=spec.streams)
        self.unwatched = [int(v) for v in rng.permutation(spec.streams)]
        self.watched: list[int] = []
        self.ops = spec.profile.operations
        if spec.op_weights is None:
            self.weights = np.full(len(self.ops), 1.0 / len(self.ops))
        else:
            w = np.asarray(spec.op_weights, dtype=float)
            self.weights = w / w.sum()
        self.sessions: list[_Session] = []

    def session(self, video: int, first: int, segments: int) -> _Session:
        op = self.ops[int(self.rng.choice(len(self.ops), p=self.weights))]
        s = _Session(len(self.sessions), video, op, first, segments, self.spec.group_size)
        self.sessions.append(s)
        return s

    def next_session(self, hosts: list[_Session], budget: int) -> tuple[_Session, bool]:
        """A new session and whether it joined one of ``hosts``."""
        spec = self.spec
        replay = self.watched and (not self.unwatched or self.rng.random() < spec.overlap_probability)
        if replay:
            if hosts and self.rng.random() < spec.live_join_fraction:
                host = hosts[int(self.rng.integers(len(hosts)))]
                first = host.first_segment + host.next_group * spec.group_size
                left = host.first_segment + host.segments - first
                joiner = self.session(host.video, first, min(left, budget))
                host.companions.append(joiner)
                return joiner, True
            video = self.watched[int(self.rng.integers(len(self.watched)))]
        else:
            video = self.unwatched.pop()
            self.watched.append(video)
        return self.session(video, 0, min(int(self.lengths[video]), budget)), False


Slot = list[tuple[int, int]]


def _plan(spec: WorkloadSpec, rng: np.random.Generator) -> tuple[list[_Session], list[Slot]]:
    """Sessions plus the (session, group) pairs submitted in each arrival slot."""
    planner = _Planner(spec, rng)
    if spec.total_tasks is None:
        sessions = [planner.session(v, 0, int(planner.lengths[v])) for v in range(spec.streams)]
        return sessions, [[(s.viewer, grp)] for s in sessions for grp in range(s.groups)]

    mean_segments = (spec.segments_min + spec.segments_max) / 2.0
    expected_slots = spec.total_tasks / min(spec.group_size, mean_segments) / (1.0 + spec.overlap_probability)
    group_playback = spec.group_size * spec.segment_duration
    lanes = max(1, round(expected_slots / spec.horizon * group_playback / spec.pace))

    lane_state: list[_Session | None] = [None] * lanes
    slots: list[Slot] = []
    budget = spec.total_tasks
    lane = 0
    while True:
        host = lane_state[lane]
        while host is None and budget > 0:
            live = [s for s in lane_state if s is not None and s.next_group < s.groups]
            sess, joined = planner.next_session(live, budget)
            budget -= sess.segments
            if not joined:
                host = lane_state[lane] = sess
        if host is None:
            if all(s is None for s in lane_state):
                break
            lane = (lane + 1) % lanes
            continue
        slot = [(host.viewer, host.next_group)]
        for c in host.companions:
            if c.next_group < c.groups:
                slot.append((c.viewer, c.next_group))
                c.next_group += 1
        slots.append(slot)
        host.next_group += 1
        if host.next_group >= host.groups:
            lane_state[lane] = None
        lane = (lane + 1) % lanes
    return planner.sessions, slots


def generate(spec: WorkloadSpec, seed: int | None = None) -> list[Task]:
    """Build a trace; identical ``(spec, seed)`` gives an identical trace."""
    spec.validate()
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    sessions, slots = _plan(spec, rng)
    video_factor = 1.0 + spec.content_jitter * (2.0 * rng.random(spec.streams) - 1.0)
    times_ms = _arrival_times(spec, len(slots), rng)

    g = spec.group_size
    sd_frac = spec.sd_fraction * spec.sd_scale
    raw = []
    for t_ms, slot in zip(times_ms, slots):
        for viewer, grp in slot:
            sess = sessions[viewer]
            op, param = sess.op
            mu = spec.profile.mean(op, param) * float(video_factor[sess.video])
            first = sess.first_segment + grp * g
            last = sess.first_segment + sess.segments
            for seg in range(first, min(first + g, last)):
                raw.append((int(t_ms), viewer, seg, sess.video, op, param, mu))
    raw.sort(key=lambda r: (r[0], r[1], r[2]))

    tasks = [
        Task(
            id=k,
            stream_id=video,
            segment_idx=seg,
            op=OperationSpec(op, (param,)),
            arrival=t_ms / 1000.0,
            deadline=0.0,
            exec_mean=mu,
            exec_sd=mu * sd_frac,
            viewer_id=viewer,
        )
        for k, (t_ms, viewer, seg, video, op, param, mu) in enumerate(raw)
    ]
    return assign_deadlines(tasks, spec.deadlines)


def assign_deadlines(trace: Sequence[Task], model: DeadlineModel = DeadlineModel()) -> list[Task]:
    """Give every task a deadline under ``model``.

    The streaming model anchors each viewer session at its first arrival and
    its lowest segment index.
    """
    if model.kind == "slack":
        return [replace(t, deadline=round(t.arrival + model.slack_factor * t.exec_mean, 9))
                for t in trace]
    start: dict[int, tuple[float, int]] = {}
    for t in trace:
        a, s = start.get(t.viewer_id, (math.inf, 1 << 62))
        start[t.viewer_id] = (min(a, t.arrival), min(s, t.segment_idx))
    out = []
    for t in trace:
        a, s = start[t.viewer_id]
        due = a + model.startup_delay + (t.segment_idx - s) * model.segment_duration
        out.append(replace(t, deadline=round(due, 9)))
    return out


def merge_opportunity(trace: Sequence[Task]) -> float:
    """Share of tasks whose (stream, segment) already appeared earlier in the
    trace, i.e. that would find a data-level partner if nothing were ever
    served."""
    seen = set()
    hits = 0
    for t in trace:
        key = (t.stream_id, t.segment_idx)
        if key in seen:
            hits += 1
        seen.add(key)
    return hits / len(trace) if trace else 0.0


# -- file format -------------------------------------------------------------

def _format_row(t: Task) -> list[str]:
    return [str(t.id), str(t.stream_id), str(t.segment_idx), t.op.op_type.value,
            t.op.param_text, repr(float(t.arrival)), repr(float(t.exec_mean)),
            repr(float(t.exec_sd)), repr(float(t.deadline)), str(t.viewer_id)]


def dumps_trace(trace: Iterable[Task]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for t in trace:
        w.writerow(_format_row(t))
    return buf.getvalue()


def save_trace(trace: Iterable[Task], path: str | Path) -> None:
    Path(path).write_text(dumps_trace(trace), encoding="utf-8")


def _parse_field(value: str, kind, line: int, column: int):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        return kind(value)
    except ValueError as exc:
        raise TraceFormatError(line, column, f"bad value {value!r}: {exc}") from None


def loads_trace(text: str) -> list[Task]:
    tasks = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if [f.strip() for f in fields] != TRACE_HEADER:
                raise TraceFormatError(lineno, None, f"expected header {','.join(TRACE_HEADER)}")
            header_seen = True
            continue
        if len(fields) != len(TRACE_HEADER):
            raise TraceFormatError(lineno, None, f"expected {len(TRACE_HEADER)} fields, got {len(fields)}")
        f = [x.strip() for x in fields]
        kinds = [int, int, int, OpType.parse, str, float, float, float, float, int]
        v = [_parse_field(f[c], kinds[c], lineno, c + 1) for c in range(len(kinds))]
        params = tuple(p for p in v[4].split(";"))
        try:
            tasks.append(Task(
                id=v[0], stream_id=v[1], segment_idx=v[2],
                op=OperationSpec(v[3], params), arrival=v[5], deadline=v[8],
                exec_mean=v[6], exec_sd=v[7], viewer_id=v[9]))
        except ValueError as exc:
            raise TraceFormatError(lineno, None, str(exc)) from None
    if not header_seen:
        raise TraceFormatError(1, None, "missing header line")
    return tasks


def load_trace(path: str | Path) -> list[Task]:
    return loads_trace(Path(path).read_text(encoding="utf-8"))
