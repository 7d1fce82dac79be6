"""Task and queue-entry factories shared by the test modules."""

from __future__ import annotations

import itertools

from taskmerge.model import MergedTask, OperationSpec, OpType, Task

_ids = itertools.count(10_000)

OPS = {
    "codec": (OpType.CHANGE_CODEC, "h265"),
    "codec2": (OpType.CHANGE_CODEC, "vp9"),
    "fps": (OpType.ADJUST_FRAME_RATE, "30fps"),
    "res": (OpType.REDUCE_RESOLUTION, "720p"),
    "bitrate": (OpType.ADJUST_BIT_RATE, "2m"),
}


def make_task(id=None, *, stream=1, seg=0, op="codec", arrival=0.0, deadline=100.0,
              mu=10.0, sd=0.0, viewer=0) -> Task:
    op_type, param = OPS[op] if isinstance(op, str) else op
    return Task(
        id=next(_ids) if id is None else id,
        stream_id=stream,
        segment_idx=seg,
        op=OperationSpec(op_type, (param,)),
        arrival=arrival,
        deadline=deadline,
        exec_mean=mu,
        exec_sd=sd,
        viewer_id=viewer,
    )


def entry(*args, **kwargs) -> MergedTask:
    return MergedTask.singleton(make_task(*args, **kwargs))



# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    return ok
