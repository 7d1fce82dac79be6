"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from taskmerge.assessor import adaptive_alpha, osl
from taskmerge.engine import EngineConfig, run
from taskmerge.experiment import ExperimentPlan, one_sided_lower_bound, run_plan
from taskmerge.impact import MachineView, SystemSnapshot
from taskmerge.model import SharingFactors, sharing_saving
from taskmerge.policy import QueuingPolicy
from taskmerge.tracegen import WorkloadSpec, generate, save_trace

from helpers import entry, make_task, verdict
from oracles import check_heuristics, random_small_trace, random_snapshot, run_index_fuzz

MERGING = ("Conservative", "Aggressive", "Adaptive")


def raw_rows(rows, **match):
    return [r for r in rows if r["row_type"] == "raw"
            and all(r[k] == v for k, v in match.items())]


def by_rep(rows, metric):
    return np.array([r[metric] for r in sorted(rows, key=lambda r: r["rep"])])


def test_01_task_level_pair_takes_one_task_time():
    t0 = time.perf_counter()
    one = EngineConfig(machine_count=1)

    def makespans(sd, seed):
        pair = [make_task(0, mu=10.0, sd=sd), make_task(1, mu=10.0, sd=sd)]
        merged = run(pair, one.with_(seed=seed))
        alone = run(pair, one.with_(merge_mode="NoMerge", seed=seed))
        return merged, alone

    merged, alone = makespans(0.0, 0)
    exact = (merged.makespan == 10.0 and alone.makespan == 20.0
             and merged.merges_task_level == 1)
    noisy = [makespans(0.4, s) for s in range(100)]
    ratio = np.mean([a.makespan for _, a in noisy]) / np.mean([m.makespan for m, _ in noisy])
    elapsed = time.perf_counter() - t0
    ok = exact and abs(ratio - 2.0) <= 0.2 and elapsed < 1.0
    assert verdict(1, "task-level pairwise saving", ok,
                   f"sigma=0 merged {merged.makespan:g}s vs unmerged {alone.makespan:g}s; "
                   f"sigma=4% unmerged/merged = {ratio:.3f} (2 +/- 10%); {elapsed:.2f}s")


def test_02_data_only_pair_saving_in_band():
    t0 = time.perf_counter()
    rho = SharingFactors().data_only
    closed_form = sharing_saving(rho)
    i = make_task(0, stream=1, seg=0, op="codec", mu=10.0, deadline=1000.0)
    j = make_task(1, stream=1, seg=0, op="fps", mu=10.0, deadline=1000.0)
    cfg = EngineConfig(machine_count=1)
    merged = run([i, j], cfg.with_(merge_mode="Aggressive"))
    alone = run([i, j], cfg.with_(merge_mode="NoMerge"))
    simulated = 1.0 - merged.makespan / alone.makespan
    elapsed = time.perf_counter() - t0
    ok = (0.30 <= closed_form <= 0.45 and simulated == pytest.approx(closed_form)
          and merged.merges_data_only == 1 and elapsed < 1.0)
    assert verdict(2, "data-only pairwise saving", ok,
                   f"rho={rho:g} saves {closed_form:.1%} closed form, {simulated:.1%} simulated "
                   f"(band 30-45%); {elapsed:.2f}s")


def test_03_makespan_trend():
    t0 = time.perf_counter()
    loads = (1000, 1500, 2000, 2500)
    rows = run_plan(ExperimentPlan(loads=loads, reps=30))
    savings = {}
    for mode in MERGING:
        for load in loads:
            base = by_rep(raw_rows(rows, load=load, mode="NoMerge"), "makespan").mean()
            mine = by_rep(raw_rows(rows, load=load, mode=mode), "makespan").mean()
            savings[mode, load] = 100.0 * (base - mine) / base
    elapsed = time.perf_counter() - t0
    reduces = all(v > 0 for v in savings.values())
    trend = all(savings[m, a] <= savings[m, b] for m in MERGING for a, b in zip(loads, loads[1:]))
    band = all(3.0 <= savings[m, 2500] <= 12.0 for m in MERGING)
    ok = reduces and trend and band and elapsed < 300
    table = "; ".join(f"{m} " + "/".join(f"{savings[m, l]:.2f}" for l in loads) for m in MERGING)
    assert verdict(3, "makespan saving grows with load", ok,
                   f"saving % at {loads}: {table} (2500 must lie in [3, 12]); {elapsed:.0f}s")


def test_04_dmr_reduction_ordering():
    t0 = time.perf_counter()
    plan = ExperimentPlan(loads=(1000, 2500), modes=("Conservative", "Aggressive"),
                          queue_policies=("EDF", "MaxUrgency"), reps=30)
    rows = run_plan(plan)
    parts = []
    ok = True
    for policy in ("EDF", "MaxUrgency"):
        for load, (better, worse) in ((1000, ("Conservative", "Aggressive")),
                                      (2500, ("Aggressive", "Conservative"))):
            a = by_rep(raw_rows(rows, load=load, queue_policy=policy, mode=better), "dmr_reduction")
            b = by_rep(raw_rows(rows, load=load, queue_policy=policy, mode=worse), "dmr_reduction")
            bound = one_sided_lower_bound(a - b, 0.95)
            ok &= bound >= 0.0
            parts.append(f"{policy}@{load} {better}-{worse} mean {np.mean(a - b):+.4f} "
                         f"95% lower bound {bound:+.4f}")
    assert verdict(4, "DMR-reduction ordering by load", ok,
                   "; ".join(parts) + f"; {time.perf_counter() - t0:.0f}s")


def test_05_conservative_never_adds_misses_without_uncertainty():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    policies = list(QueuingPolicy)
    violations = []
    for k in range(1000):
        trace = random_small_trace(rng)
        cfg = EngineConfig(machine_count=int(rng.integers(1, 4)), queue_policy=policies[k % 3])
        base = run(trace, cfg.with_(merge_mode="NoMerge"))
        cons = run(trace, cfg.with_(merge_mode="Conservative"))
        if cons.late_tasks > base.late_tasks:
            violations.append((k, cfg.queue_policy.value, cfg.machine_count))
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < 60
    by_policy = {p.value: sum(v[1] == p.value for v in violations) for p in policies}
    assert verdict(5, "conservative safety at sigma=0", ok,
                   f"{len(violations)} of 1000 traces had more misses with Conservative "
                   f"{by_policy}; {elapsed:.1f}s")


def test_06_heuristic_soundness_and_budgets():
    t0 = time.perf_counter()
    rng = random.Random(6)
    failures = []
    for _ in range(1000):
        snap, existing, arriving, level = random_snapshot(rng, max_batch=13, max_machines=3,
                                                          max_pending=1)
        failures += check_heuristics(snap, existing, arriving, level, rng.choice([-2.0, 0.0, 2.0]))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    assert verdict(6, "position heuristics sound and within budget", ok,
                   f"{len(failures)} violations over 1000 snapshots"
                   f"{': ' + failures[0] if failures else ''}; {elapsed:.1f}s")


def test_07_similarity_index_fuzz():
    t0 = time.perf_counter()
    violations = run_index_fuzz(100_000, seed=7)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 30
    assert verdict(7, "similarity index consistency", ok,
                   f"{violations} violations over 100000 events; {elapsed:.1f}s")


def test_08_adaptive_alpha_endpoints():
    on_time = SystemSnapshot(0.0, (MachineView(), MachineView(3.0)),
                             (entry(mu=5, deadline=50), entry(mu=5, deadline=60)))
    values = (adaptive_alpha(0, 2), adaptive_alpha(1, 2), osl(on_time).value)
    ok = values == (2.0, -2.0, 0.0)
    assert verdict(8, "adaptive alpha endpoints", ok,
                   f"alpha(0,2)={values[0]:g}, alpha(1,2)={values[1]:g}, "
                   f"OSL(on-time snapshot)={values[2]:g}")


def test_09_uncertainty_scaling():
    t0 = time.perf_counter()
    plan = ExperimentPlan(loads=(2500,), modes=("Conservative", "Adaptive"),
                          sd_scales=(5.0, 10.0), reps=30)
    rows = run_plan(plan)
    ok = True
    parts = []
    for sd in (5.0, 10.0):
        cons = by_rep(raw_rows(rows, sd_scale=sd, mode="Conservative"), "dmr_reduction")
        adap = by_rep(raw_rows(rows, sd_scale=sd, mode="Adaptive"), "dmr_reduction")
        ok &= cons.mean() <= adap.mean()
        parts.append(f"{sd:g}SD Conservative {cons.mean():.4f} vs Adaptive {adap.mean():.4f}")
    assert verdict(9, "Conservative gain not above Adaptive under uncertainty", ok,
                   "; ".join(parts) + f"; {time.perf_counter() - t0:.0f}s")


def test_10_run_output_is_deterministic(tmp_path):
    trace = tmp_path / "trace.csv"
    save_trace(generate(WorkloadSpec(total_tasks=1000), seed=10), trace)
    argv = ["run", str(trace), "--modes", "NoMerge,Conservative,Aggressive,Adaptive",
            "--queue-policy", "MaxUrgency", "--position-finder", "on", "--sd-scale", "5",
            "--seed", "3"]
    outputs = []
    for hash_seed in ("1", "2"):
        out, records = tmp_path / f"summary{hash_seed}.csv", tmp_path / f"records{hash_seed}.csv"
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        done = subprocess.run([sys.executable, "-m", "taskmerge.cli", *argv, "--out", str(out),
                               "--records", str(records)], env=env, capture_output=True)
        assert done.returncode == 0, done.stderr
        outputs.append((out.read_bytes(), records.read_bytes()))
    ok = outputs[0] == outputs[1]
    assert verdict(10, "byte-identical run output", ok,
                   f"two processes, {len(outputs[0][0])} + {len(outputs[0][1])} bytes, "
                   f"{'identical' if ok else 'different'}")
