"""Per-replica and aggregate statistics, and their CSV serialization."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import capacity_class

UTILIZATION_HEADER = ["time", "replica_id", "utilization", "honored_capacity"]
OVERLOAD_HEADER = ["replica_id", "class", "total", "overloaded", "pct"]
SUMMARY_HEADER = ["strategy", "seed", "overhead_updates", "lost_requests", "mean_overload_pct"]
RATIO_HEADER = ["time", "ratio"]
REQUESTS_HEADER = ["time", "arrivals", "lost", "honored_total"]
REPLICAS_HEADER = ["replica_id", "max_capacity", "class"]


class IoError(OSError):
    pass


def fmt(x: float) -> str:
    return f"{x:.6g}"


@dataclass
class MetricsStore:
    strategy: str = ""
    seed: int = 0
    # utilization series, one entry per replica per 1 s window while alive
    util_time: List[float] = field(default_factory=list)
    util_replica: List[int] = field(default_factory=list)
    util_value: List[float] = field(default_factory=list)
    util_honored: List[float] = field(default_factory=list)
    # replica_id -> [overloaded_requests, total_requests]
    overload: Dict[int, List[int]] = field(default_factory=dict)
    max_capacity: Dict[int, float] = field(default_factory=dict)
    overhead: int = 0
    updates_issued: int = 0
    lost_requests: int = 0
    generated_requests: int = 0
    ratio_series: List[Tuple[float, float]] = field(default_factory=list)
    # per window: (time, arrivals generated, lost, sum of honored capacity)
    request_series: List[Tuple[float, int, int, float]] = field(default_factory=list)

    def register_replica(self, rid: int, max_capacity: float) -> None:
        self.max_capacity[rid] = max_capacity
        self.overload.setdefault(rid, [0, 0])

    def record_utilization(self, t: float, rid: int, utilization: float, honored: float) -> None:
        self.util_time.append(t)
        self.util_replica.append(rid)
        self.util_value.append(utilization)
        self.util_honored.append(honored)

    def utilization_of(self, rid: int) -> Tuple[np.ndarray, np.ndarray]:
        """(times, utilizations) for one replica."""
        rep = np.asarray(self.util_replica)
        mask = rep == rid
        return np.asarray(self.util_time)[mask], np.asarray(self.util_value)[mask]

    @property
    def delivered_requests(self) -> int:
        return sum(total for _, total in self.overload.values())

    def replicas_by_class(self) -> Dict[str, List[int]]:
        out: Dict[str, List[int]] = {}
        for rid in sorted(self.max_capacity):
            out.setdefault(capacity_class(self.max_capacity[rid]), []).append(rid)
        return out


def overloaded_percentage(store: MetricsStore, replica_id: int) -> Optional[float]:
    """Fraction of a replica's requests that arrived while it was overloaded.

    Returns None for a replica that never received a request.
    """
    over, total = store.overload.get(replica_id, (0, 0))
    if total == 0:
        return None
    return over / total


def mean_overload_pct(store: MetricsStore) -> Optional[float]:
    pcts = [p for p in (overloaded_percentage(store, r) for r in sorted(store.overload)) if p is not None]
    if not pcts:
        return None
    return float(np.mean(pcts))


def class_overload(store: MetricsStore) -> Dict[str, float]:
    """Mean overloaded fraction per capacity class, over replicas that saw traffic."""
    out = {}
    for cls, ids in store.replicas_by_class().items():
        pcts = [p for p in (overloaded_percentage(store, r) for r in ids) if p is not None]
        if pcts:
            out[cls] = float(np.mean(pcts))
    return out


def utilization_summary(store: MetricsStore, replica_id: int) -> Tuple[float, float, float]:
    _, u = store.utilization_of(replica_id)
    if u.size == 0:
        raise ValueError(f"no utilization samples for replica {replica_id}")
    return float(u.mean()), float(np.percentile(u, 5)), float(np.percentile(u, 95))


def _open(path: Path):
    try:
        return open(path, "w", newline="")
    except OSError as e:
        raise IoError(e.errno, f"cannot write {path}: {e.strerror}", str(path)) from e


def write_csv(store: MetricsStore, out_dir) -> List[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(e.errno, f"cannot create {out}: {e.strerror}", str(out)) from e
    if not os.access(out, os.W_OK):
        raise IoError(13, f"cannot write to {out}", str(out))
    written = []

    def emit(name, header, rows):
        path = out / name
        with _open(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    emit(
        "utilization.csv",
        UTILIZATION_HEADER,
        (
            (fmt(t), r, fmt(u), fmt(h))
            for t, r, u, h in zip(store.util_time, store.util_replica, store.util_value, store.util_honored)
        ),
    )
    rows = []
    for rid in sorted(store.overload):
        over, total = store.overload[rid]
        pct = "" if total == 0 else fmt(over / total)
        rows.append((rid, capacity_class(store.max_capacity.get(rid, 0.0)), total, over, pct))
    emit("overload.csv", OVERLOAD_HEADER, rows)
    mean_pct = mean_overload_pct(store)
    emit(
        "summary.csv",
        SUMMARY_HEADER,
        [(store.strategy, store.seed, store.overhead, store.lost_requests, "" if mean_pct is None else fmt(mean_pct))],
    )
    emit("ratio.csv", RATIO_HEADER, ((fmt(t), fmt(r)) for t, r in store.ratio_series))
    emit(
        "requests.csv",
        REQUESTS_HEADER,
        ((fmt(t), a, lost, fmt(h)) for t, a, lost, h in store.request_series),
    )
    emit(
        "replicas.csv",
        REPLICAS_HEADER,
        ((rid, fmt(c), capacity_class(c)) for rid, c in sorted(store.max_capacity.items())),
    )
    return written


def _rows(path: Path, header: List[str]) -> List[List[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader)
        if got != header:
            raise ValueError(f"{path}: unexpected header {got}")
        return list(reader)


def read_csv(out_dir) -> MetricsStore:
    """Rebuild a store from ``write_csv`` output (floats at 6 significant digits)."""
    out = Path(out_dir)
    store = MetricsStore()
    for t, r, u, h in _rows(out / "utilization.csv", UTILIZATION_HEADER):
        store.record_utilization(float(t), int(r), float(u), float(h))
    for rid, c, _cls in _rows(out / "replicas.csv", REPLICAS_HEADER):
        store.max_capacity[int(rid)] = float(c)
    for rid, _cls, total, over, _pct in _rows(out / "overload.csv", OVERLOAD_HEADER):
        store.overload[int(rid)] = [int(over), int(total)]
    (strategy, seed, overhead, lost, _mean), = _rows(out / "summary.csv", SUMMARY_HEADER)
    store.strategy, store.seed = strategy, int(seed)
    store.overhead, store.lost_requests = int(overhead), int(lost)
    store.ratio_series = [(float(t), float(r)) for t, r in _rows(out / "ratio.csv", RATIO_HEADER)]
    store.request_series = [
        (float(t), int(a), int(lost), float(h)) for t, a, lost, h in _rows(out / "requests.csv", REQUESTS_HEADER)
    ]
    store.generated_requests = sum(a for _, a, _, _ in store.request_series)
    return store


def demand_ratio(store: MetricsStore) -> Dict[float, float]:
    """Per window: requests generated divided by the total honored capacity."""
    return {t: a / h for t, a, _, h in store.request_series if h > 0}


def tracking_correlation(store: MetricsStore) -> Dict[str, float]:
    """Mean Pearson correlation, per capacity class, of replica utilization with the demand ratio."""
    ratio = demand_ratio(store)
    out = {}
    for cls, ids in store.replicas_by_class().items():
        corrs = []
        for rid in ids:
            times, util = store.utilization_of(rid)
            keep = [i for i, t in enumerate(times) if t in ratio]
            if len(keep) < 3:
                continue
            u = util[keep]
            r = np.array([ratio[times[i]] for i in keep])
            if u.std() == 0 or r.std() == 0:
                continue
            corrs.append(float(np.corrcoef(u, r)[0, 1]))
        if corrs:
            out[cls] = float(np.mean(corrs))
    return out


def steady_windows(store: MetricsStore, after: float = 0.0, settle: int = 2) -> List[float]:
    """Window end times where total capacity equals the original and has held for ``settle`` windows."""
    times = []
    run = 0
    for t, ratio in store.ratio_series:
        run = run + 1 if ratio == 1.0 else 0
        if t > after and run > settle:
            times.append(t)
    return times


def mean_utilization_at(store: MetricsStore, times) -> Optional[float]:
    wanted = np.isin(np.asarray(store.util_time), np.asarray(list(times)))
    if not wanted.any():
        return None
    return float(np.asarray(store.util_value)[wanted].mean())
