import random

import pytest
from hypothesis import given, strategies as st

from taskmerge.assessor import CompletionRecord, adaptive_alpha, osl, osl_observed
from taskmerge.engine import Engine, EngineConfig
from taskmerge.impact import MachineView, SystemSnapshot

from helpers import entry, make_task


def test_on_time_queue_reads_zero():
    snap = SystemSnapshot(0.0, (MachineView(),), (entry(mu=5, deadline=20), entry(mu=5, deadline=30)))
    r = osl(snap)
    assert r.value == 0.0 and r.sample_count == 2


def test_single_late_task():
    # W = 15 - 0 - 5 = 10; completes at 15 + 5 = 20, five seconds late.
    snap = SystemSnapshot(0.0, (MachineView(15.0),), (entry(arrival=0, mu=5, deadline=15),))
    assert osl(snap).value == pytest.approx(0.5)


def test_infeasible_task_contributes_nothing():
    infeasible = entry(arrival=0, mu=40, deadline=37)   # W = -3
    late = entry(arrival=0, mu=5, deadline=15)          # W = 10, completes 35
    snap = SystemSnapshot(0.0, (MachineView(30.0), MachineView()), (infeasible, late))
    assert osl(snap).value == pytest.approx(1.0)


def test_empty_snapshot_reads_zero():
    assert osl(SystemSnapshot(0.0, (MachineView(),), ())).sample_count == 0
    assert osl(SystemSnapshot(0.0, (MachineView(),), ())).value == 0.0


def test_machine_queues_count():
    pending = (entry(arrival=0, mu=5, deadline=15),)
    snap = SystemSnapshot(0.0, (MachineView(15.0, 0.0, pending),), ())
    r = osl(snap)
    assert r.sample_count == 1 and r.value == pytest.approx(0.5)


def test_osl_uses_beta_for_estimates():
    e = entry(arrival=0, mu=10, sd=1, deadline=11.5)   # E = 12 at beta 2, so W < 0
    snap = SystemSnapshot(0.0, (MachineView(5.0),), (e,))
    assert osl(snap, beta=2.0).value == 0.0
    assert osl(snap, beta=0.5).value > 0.0


def rec(arrival, deadline, est, completion):
    return CompletionRecord(arrival, deadline, est, completion)


def test_observed_examples():
    assert osl_observed([rec(0, 10, 5, 8)]).value == 0.0
    assert osl_observed([rec(0, 10, 6, 12)]).value == pytest.approx(0.5)
    mixed = [rec(0, 10, 5, 8), rec(0, 10, 5, 16), rec(0, 10, 12, 30)]
    assert osl_observed(mixed).value == pytest.approx(0.4)
    empty = osl_observed([])
    assert (empty.value, empty.sample_count) == (0.0, 0)


def test_observed_window():
    records = [rec(0, 10, 6, 12), rec(0, 10, 6, 100)]
    r = osl_observed(records, window_end=50.0, window_seconds=60.0)
    assert r.sample_count == 1 and r.value == pytest.approx(0.5)


def test_adaptive_alpha_examples():
    assert adaptive_alpha(0.0, 2.0) == 2.0
    assert adaptive_alpha(1.0, 2.0) == -2.0
    assert adaptive_alpha(0.5, 2.0) == 0.0
    assert adaptive_alpha(7.0, 2.0) == -2.0
    assert adaptive_alpha(-1.0, 2.0) == 2.0
    with pytest.raises(ValueError):
        adaptive_alpha(0.5, 0.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 5))
def test_adaptive_alpha_linear_and_bounded(a, b, beta):
    fa, fb = adaptive_alpha(a, beta), adaptive_alpha(b, beta)
    assert -beta <= fa <= beta
    assert fa - fb == pytest.approx(-2 * beta * (a - b), abs=1e-9)


def random_batch(rng, n):
    return tuple(entry(arrival=0.0, mu=float(rng.randint(1, 10)),
                       deadline=float(rng.randint(1, 40))) for _ in range(n))


@given(st.integers(0, 10_000), st.floats(0.1, 30))
def test_osl_monotone_in_one_task_lateness(seed, extra):
    rng = random.Random(seed)
    others = MachineView(float(rng.randint(0, 20)), 0.0, random_batch(rng, rng.randint(0, 6)))
    target = random_batch(rng, 1)
    r = float(rng.randint(0, 20))
    # The target waits alone on its own machine; only that machine's backlog grows.
    before = osl(SystemSnapshot(0.0, (others, MachineView(r, 0.0, target)), ())).value
    after = osl(SystemSnapshot(0.0, (others, MachineView(r + extra, 0.0, target)), ())).value
    assert after >= before


@given(st.integers(0, 10_000))
def test_infeasible_task_changes_only_the_count(seed):
    rng = random.Random(seed)
    batch = random_batch(rng, rng.randint(1, 8))
    machines = (MachineView(float(rng.randint(0, 20))), MachineView())
    a = osl(SystemSnapshot(0.0, machines, batch))
    hopeless = entry(arrival=0.0, mu=5.0, deadline=4.0)
    b = osl(SystemSnapshot(0.0, machines, batch + (hopeless,)))
    assert b.sample_count == a.sample_count + 1
    assert b.value * b.sample_count == pytest.approx(a.value * a.sample_count)


def test_estimated_equals_observed_without_spread():
    rng = random.Random(3)
    for _ in range(30):
        tasks = [make_task(k, stream=k, arrival=0.0, mu=float(rng.randint(1, 9)),
                           deadline=float(rng.randint(1, 30))) for k in range(rng.randint(1, 8))]
        engine = Engine(EngineConfig(machine_count=rng.randint(1, 3), merge_mode="NoMerge"))
        for t in tasks:
            engine.submit(t)
        estimated = osl(engine.snapshot()).value
        report = engine.run([])
        observed = osl_observed(rec(r.arrival, r.deadline, r.exec_mean, r.completion)
                                for r in report.records).value
        assert estimated == pytest.approx(observed)
