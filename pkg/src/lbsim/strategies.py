"""Allocation weights for Inv-Load, Avail-Cap and Max-Cap, plus weighted replica choice."""
from __future__ import annotations

from bisect import bisect_right
from itertools import accumulate
from typing import Callable, Dict, List, NamedTuple, Sequence, Tuple

from .model import NoReplicaAvailable, PeerView, Strategy

# Inv-Load clamps reported load here before inverting; the load metric resolves to 1 req/s
LOAD_FLOOR = 1.0


class ReplicaSnapshot(NamedTuple):
    replica_id: int
    reported_load: float = 0.0
    reported_avail: float = 0.0
    reported_contract: float = 0.0
    alive: bool = True


WeightVector = List[Tuple[int, float]]


def _alive(snapshots: Sequence[ReplicaSnapshot]) -> List[ReplicaSnapshot]:
    alive = [s for s in snapshots if s.alive]
    if not alive:
        raise NoReplicaAvailable("no alive replica in snapshot")
    return alive


def _normalize(ids: List[int], raw: List[float]) -> WeightVector:
    total = sum(raw)
    if total <= 0:
        p = 1.0 / len(ids)
        return [(i, p) for i in ids]
    return [(i, w / total) for i, w in zip(ids, raw)]


def invload_weights(snapshots: Sequence[ReplicaSnapshot]) -> WeightVector:
    alive = _alive(snapshots)
    raw = [1.0 / max(s.reported_load, LOAD_FLOOR) for s in alive]
    return _normalize([s.replica_id for s in alive], raw)


def availcap_weights(snapshots: Sequence[ReplicaSnapshot]) -> WeightVector:
    """Weights proportional to reported available capacity.

    A replica reporting zero is excluded. When every alive replica reports
    zero the node has nothing to go on, so it falls back to uniform.
    """
    alive = _alive(snapshots)
    raw = [max(s.reported_avail, 0.0) for s in alive]
    return _normalize([s.replica_id for s in alive], raw)


def maxcap_weights(snapshots: Sequence[ReplicaSnapshot]) -> WeightVector:
    alive = _alive(snapshots)
    raw = [max(s.reported_contract, 0.0) for s in alive]
    return _normalize([s.replica_id for s in alive], raw)


WEIGHT_FUNCTIONS: Dict[Strategy, Callable[[Sequence[ReplicaSnapshot]], WeightVector]] = {
    Strategy.INV_LOAD: invload_weights,
    Strategy.AVAIL_CAP: availcap_weights,
    Strategy.MAX_CAP: maxcap_weights,
}


def choose_replica(weights: WeightVector, u: float) -> int:
    """Return the replica whose half-open cumulative interval [lo, hi) holds ``u``."""
    if not weights:
        raise NoReplicaAvailable("empty weight vector")
    cum = list(accumulate(p for _, p in weights))
    return weights[_pick(cum, weights, u)][0]


def _pick(cum: List[float], weights: WeightVector, u: float) -> int:
    idx = bisect_right(cum, u)
    if idx >= len(weights):
        # u landed past a cumulative total that rounded just below 1
        idx = max(i for i, (_, p) in enumerate(weights) if p > 0)
    return idx


def snapshots_from_view(view: PeerView) -> List[ReplicaSnapshot]:
    alive = view.known_alive
    return [
        ReplicaSnapshot(rid, entry.load, entry.avail, entry.contract, rid in alive)
        for rid, entry in sorted(view.cache.items())
    ]


class Allocator:
    """Per-view cache of a strategy's cumulative weights, rebuilt when the view changes."""

    def __init__(self, strategy: Strategy):
        self.weight_fn = WEIGHT_FUNCTIONS[strategy]
        self.version = -1
        self.ids: List[int] = []
        self.cum: List[float] = []
        self._weights: WeightVector = []

    def refresh(self, view: PeerView) -> None:
        self.version = view.version
        snaps = snapshots_from_view(view)
        if any(s.alive for s in snaps):
            self._weights = self.weight_fn(snaps)
        else:
            self._weights = []
        self.ids = [rid for rid, _ in self._weights]
        self.cum = list(accumulate(p for _, p in self._weights))
        if self.cum:
            # pin the top so every u in [0, 1) lands inside the last positive interval
            last = max(i for i, (_, p) in enumerate(self._weights) if p > 0)
            self.cum[last:] = [1.0] * (len(self.cum) - last)

    def weights(self, view: PeerView) -> WeightVector:
        if view.version != self.version:
            self.refresh(view)
        return self._weights

    def choose(self, view: PeerView, u: float) -> int:
        if view.version != self.version:
            self.refresh(view)
        if not self.ids:
            raise NoReplicaAvailable(f"view at level {view.tree_level} knows no alive replica")
        return self.ids[bisect_right(self.cum, u)]
