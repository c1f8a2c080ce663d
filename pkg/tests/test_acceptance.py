"""Acceptance checks at desk scale: 1024 nodes, 10 replicas, 3000 simulated seconds.

Each check prints one PASS/FAIL line (run with ``pytest -s`` to see them) and
then asserts. Runs are cached in ``preset_run`` so checks share simulations.
"""
import math
import random
from collections import Counter

import numpy as np
import pytest

from lbsim.cli import PRESETS, preset_config
from lbsim.engine import run
from lbsim.metrics import (
    class_overload,
    mean_overload_pct,
    mean_utilization_at,
    overloaded_percentage,
    steady_windows,
    tracking_correlation,
    utilization_summary,
    write_csv,
)
from lbsim.model import ChurnPlan, Strategy
from lbsim.strategies import ReplicaSnapshot, choose_replica, maxcap_weights, WEIGHT_FUNCTIONS
from lbsim.workload import pareto_cdf, pareto_interarrival

from .conftest import WALL_TIMES, make_config, preset_run

FIVE = range(1, 6)
TEN = range(1, 11)


def report(number, label, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {label} :: {detail}")
    assert ok, f"criterion {number} ({label}): {detail}"


def per_replica_mean(name, seeds, **overrides):
    """replica_id -> overloaded fraction averaged over seeds."""
    acc = {}
    for seed in seeds:
        store = preset_run(name, seed, **overrides)
        for rid in store.overload:
            p = overloaded_percentage(store, rid)
            if p is not None:
                acc.setdefault(rid, []).append(p)
    return {rid: float(np.mean(v)) for rid, v in acc.items()}


def class_mean(name, seeds, **overrides):
    acc = {}
    for seed in seeds:
        for cls, p in class_overload(preset_run(name, seed, **overrides)).items():
            acc.setdefault(cls, []).append(p)
    return {cls: float(np.mean(v)) for cls, v in acc.items()}


def fmt_map(m):
    return ", ".join(f"{k}={v:.3f}" for k, v in sorted(m.items()))


def test_c1_invload_fails_under_heterogeneity():
    caps = preset_run("invload-hetero-80", 1).max_capacity
    pct = per_replica_mean("invload-hetero-80", FIVE)
    small = [pct[r] for r in pct if caps[r] in (1.0, 10.0)]
    large = [pct[r] for r in pct if caps[r] == 100.0]
    ok = len(small) == 7 and len(large) == 3 and min(small) >= 0.85 and max(large) <= 0.05
    report(1, "Inv-Load heterogeneity", ok, f"min low/mid={min(small):.3f} (>=0.85), max high={max(large):.3f} (<=0.05)")


def test_c2_maxcap_clusters_utilization():
    utils = []
    for seed in TEN:
        store = preset_run("maxcap-hetero-80", seed)
        utils += [utilization_summary(store, rid)[0] for rid in sorted(store.max_capacity)]
    cls = class_mean("maxcap-hetero-80", TEN)
    ok = (
        all(0.70 <= u <= 0.90 for u in utils)
        and 0.25 <= cls["low"] <= 0.45
        and 0.07 <= cls["mid"] <= 0.21
        and cls["high"] <= 0.02
    )
    report(2, "Max-Cap clustering and step effect", ok,
           f"utilization range [{min(utils):.3f}, {max(utils):.3f}] in [0.70, 0.90]; {fmt_map(cls)}")


def test_c3_availcap_oscillation():
    means = [mean_overload_pct(preset_run("availcap-hetero-80", s)) for s in TEN]
    cls = class_mean("availcap-hetero-80", TEN)
    spread = max(cls.values()) - min(cls.values())
    slow = [mean_overload_pct(preset_run("availcap-hetero-80", s, update_period=10.0)) for s in FIVE]
    ok = 0.30 <= np.mean(means) <= 0.50 and spread <= 0.15 and np.mean(slow) >= 0.70
    report(3, "Avail-Cap oscillation", ok,
           f"U=1 mean={np.mean(means):.3f} in [0.30, 0.50], class spread={spread:.3f} (<=0.15); "
           f"U=10 mean={np.mean(slow):.3f} (>=0.70)")


def test_c4_maxcap_beats_availcap_twice():
    mc = class_mean("maxcap-hetero-80", TEN)
    ac = class_mean("availcap-hetero-80", TEN)
    ok = all(ac[c] >= 2 * mc[c] and mc[c] < ac[c] for c in ("mid", "high"))
    report(4, "Max-Cap vs Avail-Cap ordering", ok, f"Max-Cap {fmt_map(mc)}; Avail-Cap {fmt_map(ac)}")


def test_c5_pareto_tracking():
    mc = preset_run("pareto-maxcap", 1)
    ac = preset_run("pareto-availcap", 1)
    duration = preset_config("pareto-maxcap").duration
    rate = mc.generated_requests / duration
    corr_mc, corr_ac = tracking_correlation(mc), tracking_correlation(ac)
    tracks = all(corr_mc[c] > corr_ac[c] for c in ("low", "mid", "high"))
    rate_ok = abs(rate - 289.0) <= 0.10 * 289.0
    report(5, "Pareto tracking", rate_ok and tracks,
           f"realized rate={rate:.1f} req/s (289 +/- 10%: {'ok' if rate_ok else 'out'}); "
           f"corr Max-Cap {fmt_map(corr_mc)} vs Avail-Cap {fmt_map(corr_ac)}")


def test_c6_update_overhead():
    mc = preset_run("maxcap-hetero-80", 1)
    il = preset_run("invload-hetero-80", 1)
    ac = preset_run("availcap-hetero-80", 1)
    expected = int(3000 / 1.0) * 10
    ok = (
        mc.updates_issued == 0
        and mc.overhead == 0
        and il.updates_issued == ac.updates_issued == expected
        and il.overhead == ac.overhead == expected * 1024
    )
    report(6, "update overhead", ok,
           f"Max-Cap issued={mc.updates_issued}; Inv-Load issued={il.updates_issued} deliveries={il.overhead}; "
           f"Avail-Cap issued={ac.updates_issued} deliveries={ac.overhead}; expected {expected} / {expected * 1024}")


def _csv_bytes(store, path):
    return {p.name: p.read_bytes() for p in write_csv(store, path)}


def test_c7_staleness_independence(tmp_path):
    mc0 = _csv_bytes(preset_run("maxcap-hetero-80", 1, hop_delay=0.0), tmp_path / "m0")
    mc1 = _csv_bytes(preset_run("maxcap-hetero-80", 1, hop_delay=1.0), tmp_path / "m1")
    ac0 = _csv_bytes(preset_run("availcap-hetero-80", 1, hop_delay=0.0), tmp_path / "a0")
    ac1 = _csv_bytes(preset_run("availcap-hetero-80", 1, hop_delay=1.0), tmp_path / "a1")
    ok = mc0 == mc1 and ac0 != ac1
    report(7, "staleness independence", ok,
           f"Max-Cap CSVs identical={mc0 == mc1}; Avail-Cap CSVs differ={ac0 != ac1}")


@pytest.mark.parametrize("swap", [1, 5])
def test_c8_dynamic_replica_set(swap):
    mc = preset_run(f"dynamic-{swap}-60", 1)
    ac = preset_run(f"dynamic-{swap}-60-availcap", 1)
    conserved = all(s.generated_requests == s.delivered_requests + s.lost_requests for s in (mc, ac))
    steady = steady_windows(mc, after=preset_config(f"dynamic-{swap}-60").churn.start)
    util = mean_utilization_at(mc, steady)
    over_mc, over_ac = mean_overload_pct(mc), mean_overload_pct(ac)
    ok = conserved and util is not None and 0.70 <= util <= 0.90 and over_mc <= over_ac
    report(8, f"dynamic replica set, swap {swap}", ok,
           f"conservation={conserved}; {len(steady)} steady windows, Max-Cap utilization={util:.3f} in [0.70, 0.90]; "
           f"overloaded Max-Cap={over_mc:.3f} <= Avail-Cap={over_ac:.3f}")


def test_c9_extraneous_load():
    u1 = preset_run("xload-maxcap-u1", 1)
    u10 = preset_run("xload-maxcap-u10", 1)
    honored = float(np.mean([r for _, r in u1.ratio_series]))
    mc_delta = mean_overload_pct(u10) - mean_overload_pct(u1)
    ac1 = mean_overload_pct(preset_run("xload-availcap-u1", 1))
    ac10 = mean_overload_pct(preset_run("xload-availcap-u10", 1))
    ok = abs(honored - 0.75) <= 0.05 * 0.75 and mc_delta <= 0.10 and ac10 - ac1 >= 0.20
    report(9, "extraneous load", ok,
           f"mean honored/nominal={honored:.4f} (0.75 +/- 5%); Max-Cap degradation={mc_delta * 100:.1f} pts (<=10); "
           f"Avail-Cap degradation={(ac10 - ac1) * 100:.1f} pts (>=20)")


def test_c10_homogeneous_equivalence():
    il = per_replica_mean("homog-invload", FIVE)
    mc = per_replica_mean("homog-maxcap", FIVE)
    gaps = {rid: abs(il[rid] - mc[rid]) for rid in mc}
    worst = max(gaps.values())
    report(10, "homogeneous equivalence", len(gaps) == 10 and worst <= 0.05,
           f"Inv-Load mean={np.mean(list(il.values())):.3f}, Max-Cap mean={np.mean(list(mc.values())):.3f}, "
           f"largest per-replica gap={worst * 100:.1f} pts (<=5)")


def test_c11_property_suites():
    rng = random.Random(11)
    failures = []
    for _ in range(2000):
        n = rng.randint(1, 12)
        snaps = [
            ReplicaSnapshot(i, rng.uniform(0, 200), rng.uniform(0, 100), rng.choice([1.0, 10.0, 100.0]),
                            alive=rng.random() > 0.2 or i == 0)
            for i in range(n)
        ]
        for strategy, fn in WEIGHT_FUNCTIONS.items():
            w = fn(snaps)
            alive = {s.replica_id for s in snaps if s.alive}
            if abs(math.fsum(p for _, p in w) - 1.0) > 1e-12 or {r for r, _ in w} != alive or min(p for _, p in w) < 0:
                failures.append(f"normalization {strategy.value}")
        k = rng.uniform(0.01, 1000)
        scaled = [s._replace(reported_contract=s.reported_contract * k, reported_load=rng.random()) for s in snaps]
        if any(abs(a[1] - b[1]) > 1e-12 for a, b in zip(maxcap_weights(snaps), maxcap_weights(scaled))):
            failures.append("Max-Cap scale invariance")

    weights = [(0, 0.1), (1, 0.6), (2, 0.3)]
    draws = 200_000
    counts = Counter(choose_replica(weights, rng.random()) for _ in range(draws))
    sigma = max(math.sqrt(p * (1 - p) / draws) for _, p in weights)
    if any(abs(counts[r] / draws - p) > 5 * sigma for r, p in weights):
        failures.append("empirical frequency")

    for _ in range(1000):
        u = rng.random()
        if abs(pareto_cdf(1.1, 0.000346, pareto_interarrival(1.1, 0.000346, u)) - u) > 1e-9:
            failures.append("inverse-CDF round trip")
            break

    cfg = make_config(Strategy.AVAIL_CAP, duration=120.0, seed=9,
                      churn=ChurnPlan(swap_count=2, interval=20.0, start=30.0))
    a, b = run(cfg), run(cfg)
    if (a.util_value, a.overload, a.request_series) != (b.util_value, b.overload, b.request_series):
        failures.append("determinism replay")
    if a.generated_requests != a.delivered_requests + a.lost_requests:
        failures.append("conservation")

    report(11, "property suites", not failures, "all green" if not failures else ", ".join(sorted(set(failures))))


def test_desk_scale_wall_time():
    # runs here are those cached by the checks above
    assert WALL_TIMES, "no preset runs recorded"
    worst = max(WALL_TIMES.items(), key=lambda kv: kv[1])
    report("desk", "wall time per run < 300 s", worst[1] < 300.0,
           f"{len(WALL_TIMES)} runs, slowest {worst[0][0]} seed {worst[0][1]} at {worst[1]:.1f} s")
