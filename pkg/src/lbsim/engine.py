"""Discrete-event loop: arrivals, LBI propagation down the update tree, churn, extraneous load."""
from __future__ import annotations

import heapq
from bisect import bisect_right
import math
from typing import Dict, List, Optional

from .metrics import MetricsStore
from .model import (
    LbiUpdate,
    PeerView,
    Replica,
    ScenarioConfig,
    Strategy,
    UpdateKind,
    honored_capacity,
    sample_capacity,
)
from .strategies import Allocator
from .workload import ArrivalProcess, RngStream, derive_lambda


# same-time events run in this order; arrivals come after all of them
TICK, CHURN, EXTRANEOUS, ISSUE, DELIVERY = range(5)


class StalenessViolation(AssertionError):
    pass


class Simulation:
    def __init__(self, config: ScenarioConfig, audit: bool = False):
        self.config = config.validate()
        self.audit = audit
        cfg = self.config
        seed = cfg.seed
        self.rng_arrivals = RngStream(seed, "arrivals")
        self.rng_alloc = RngStream(seed, "allocation")
        self.rng_churn = RngStream(seed, "churn")
        self.rng_extraneous = RngStream(seed, "extraneous")
        self.rng_topology = RngStream(seed, "topology")
        self.rng_phase = RngStream(seed, "phase")

        self.clock = 0.0
        self._queue: list = []
        self._seq = 0
        self.metrics = MetricsStore(strategy=cfg.strategy.value, seed=seed)

        depth = cfg.max_tree_depth
        self.node_level = [1 + int(self.rng_topology.random() * depth) for _ in range(cfg.node_count)]
        self.views: Dict[int, PeerView] = {}
        for node, level in enumerate(self.node_level):
            view = self.views.get(level)
            if view is None:
                self.views[level] = PeerView(node_id=node, tree_level=level, nodes=1)
            else:
                view.nodes += 1
        self.allocators = {level: Allocator(cfg.strategy) for level in self.views}
        self._node_views = [self.views[level] for level in self.node_level]
        self._node_allocs = [self.allocators[level] for level in self.node_level]

        if cfg.capacities is not None:
            caps = list(cfg.capacities)
        else:
            caps = [sample_capacity(self.rng_topology.random()) for _ in range(cfg.replica_count)]
        self.pool_capacity: Dict[int, float] = dict(enumerate(caps))
        if cfg.churn is not None:
            for rid in range(len(caps), cfg.churn.pool_size):
                self.pool_capacity[rid] = sample_capacity(self.rng_churn.random())

        self.replicas: Dict[int, Replica] = {}
        self.incarnation: Dict[int, int] = {}
        self.last_load: Dict[int, float] = {}
        # overload classification accumulators over the current overload window
        self._ow_arrivals: Dict[int, int] = {}
        self._ow_capacity: Dict[int, float] = {}
        self._advertised: Dict[int, float] = {}
        self._next_permitted: Dict[int, float] = {}
        self._contract_pending: Dict[int, bool] = {}
        self.s_orig = math.fsum(caps)

        wl = cfg.workload
        lam = wl.lam
        if wl.kind == "poisson" and lam is None:
            lam = derive_lambda(wl.rate_fraction, caps)
        self.arrivals = ArrivalProcess(wl, self.rng_arrivals, lam)
        self._window_generated = 0
        self._window_lost = 0
        self._started = False

    # -- scheduling -------------------------------------------------------

    def schedule(self, time: float, prio: int, kind: str, payload=None) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (time, prio, self._seq, kind, payload))

    def _broadcast(self, update: LbiUpdate) -> None:
        now = self.clock
        hop = self.config.hop_delay
        for level, view in self.views.items():
            self.schedule(now + level * hop, DELIVERY, "delivery", (level, update))
        self.metrics.updates_issued += 1
        self.metrics.overhead += self.config.node_count

    # -- replica lifecycle ----------------------------------------------------

    def _add_replica(self, rid: int, announce: bool) -> Replica:
        cfg = self.config
        now = self.clock
        rep = Replica(id=rid, max_capacity=self.pool_capacity[rid], birth_time=now)
        self.replicas[rid] = rep
        inc = self.incarnation.get(rid, 0) + 1
        self.incarnation[rid] = inc
        self.last_load[rid] = 0.0
        self._ow_arrivals[rid] = 0
        self._ow_capacity[rid] = 0.0
        self._next_permitted[rid] = now
        self._contract_pending[rid] = False
        self.metrics.register_replica(rid, rep.max_capacity)
        if cfg.extraneous is not None:
            self._draw_extraneous(rep)
            self.schedule(now + cfg.extraneous.interval, EXTRANEOUS, "extraneous", (rid, inc))
        honored = honored_capacity(rep)
        self._advertised[rid] = honored
        if announce:
            self._broadcast(LbiUpdate(rid, UpdateKind.BIRTH, honored, now, load=0.0, avail=honored))
        else:
            # replicas present at t=0 announced themselves early enough to reach every level
            issued = now - cfg.max_tree_depth * cfg.hop_delay
            birth = LbiUpdate(rid, UpdateKind.BIRTH, honored, issued, load=0.0, avail=honored)
            for view in self.views.values():
                view.apply(birth, now)
        if cfg.strategy.periodic:
            phase = self.rng_phase.random() * cfg.update_period
            self.schedule(now + phase, ISSUE, "issue", (rid, inc))
        return rep

    def _remove_replica(self, rid: int) -> None:
        rep = self.replicas[rid]
        rep.alive = False
        rep.death_time = self.clock
        self._flush_overload(rid)
        self._broadcast(LbiUpdate(rid, UpdateKind.INVALIDATION, 0.0, self.clock))

    def _draw_extraneous(self, rep: Replica) -> None:
        plan = self.config.extraneous
        v = self.rng_extraneous.uniform(plan.fraction_low, plan.fraction_high)
        rep.set_extraneous(min(v * rep.max_capacity, rep.max_capacity))

    def _flush_overload(self, rid: int) -> None:
        n = self._ow_arrivals[rid]
        counters = self.metrics.overload[rid]
        counters[1] += n
        if n > self._ow_capacity[rid]:
            counters[0] += n
        self._ow_arrivals[rid] = 0
        self._ow_capacity[rid] = 0.0

    def _live(self, payload) -> Optional[Replica]:
        rid, inc = payload
        rep = self.replicas.get(rid)
        if rep is None or not rep.alive or self.incarnation[rid] != inc:
            return None
        return rep

    # -- event handlers -------------------------------------------------------

    def handle_window_tick(self) -> None:
        now = self.clock
        m = self.metrics
        classify = int(round(now)) % self.config.overload_window == 0
        honored_total = 0.0
        for rid in sorted(self.replicas):
            rep = self.replicas[rid]
            if not rep.alive:
                continue
            h = honored_capacity(rep)
            n = rep.window_arrivals
            honored_total += h
            if h > 0:
                util = n / h
            else:
                util = math.inf if n else 0.0
            m.record_utilization(now, rid, util, h)
            self.last_load[rid] = float(n)
            self._ow_arrivals[rid] += n
            self._ow_capacity[rid] += h
            rep.window_arrivals = 0
            if classify:
                self._flush_overload(rid)
        m.ratio_series.append((now, honored_total / self.s_orig))
        m.request_series.append((now, self._window_generated, self._window_lost, honored_total))
        self._window_generated = 0
        self._window_lost = 0

    def handle_update_issue(self, rid: int) -> None:
        cfg = self.config
        rep = self.replicas[rid]
        now = self.clock
        strategy = cfg.strategy
        if strategy is Strategy.MAX_CAP:
            self._contract_pending[rid] = False
            honored = honored_capacity(rep)
            if honored == self._advertised.get(rid):
                return
            self._advertised[rid] = honored
            self._next_permitted[rid] = now + cfg.update_period
            self._broadcast(LbiUpdate(rid, UpdateKind.CONTRACT, honored, now))
            return
        load = self.last_load[rid]
        if strategy is Strategy.INV_LOAD:
            update = LbiUpdate(rid, UpdateKind.LOAD, load, now)
        else:
            update = LbiUpdate(rid, UpdateKind.AVAIL_CAP, max(0.0, honored_capacity(rep) - load), now)
        self._broadcast(update)
        self.schedule(now + cfg.update_period, ISSUE, "issue", (rid, self.incarnation[rid]))

    def handle_update_delivery(self, level: int, update: LbiUpdate) -> None:
        self.views[level].apply(update, self.clock)

    def handle_churn_step(self) -> None:
        plan = self.config.churn
        rng = self.rng_churn
        alive = sorted(r for r, rep in self.replicas.items() if rep.alive)
        leaving = rng.sample(alive, min(plan.swap_count, len(alive)))
        for rid in sorted(leaving):
            self._remove_replica(rid)
        gone = set(alive)
        candidates = sorted(r for r in self.pool_capacity if r not in gone)
        for rid in sorted(rng.sample(candidates, min(plan.swap_count, len(candidates)))):
            self._add_replica(rid, announce=True)
        self.schedule(self.clock + plan.interval, CHURN, "churn")

    def handle_extraneous_change(self, rid: int) -> None:
        cfg = self.config
        rep = self.replicas[rid]
        self._draw_extraneous(rep)
        now = self.clock
        if cfg.strategy is Strategy.MAX_CAP and not self._contract_pending[rid]:
            self._contract_pending[rid] = True
            when = max(now, self._next_permitted[rid])
            self.schedule(when, ISSUE, "issue", (rid, self.incarnation[rid]))
        self.schedule(now + cfg.extraneous.interval, EXTRANEOUS, "extraneous", (rid, self.incarnation[rid]))

    def _audit_view(self, view: PeerView) -> None:
        now = self.clock
        lag = view.tree_level * self.config.hop_delay
        for rid, entry in view.cache.items():
            if entry.receipt_time > now or entry.issue_time + lag > now:
                raise StalenessViolation(
                    f"level {view.tree_level} holds replica {rid} update issued at "
                    f"{entry.issue_time} before it could arrive (now={now})"
                )

    # -- main loop --------------------------------------------------------------

    def start(self) -> None:
        """Install the initial replicas and schedule ticks and churn."""
        if self._started:
            return
        self._started = True
        cfg = self.config
        for rid in sorted(self.pool_capacity)[: cfg.initial_replica_count]:
            self._add_replica(rid, announce=False)
        for k in range(1, int(math.floor(cfg.duration)) + 1):
            self.schedule(float(k), TICK, "tick")
        if cfg.churn is not None:
            self.schedule(cfg.churn.start, CHURN, "churn")

    def run(self) -> MetricsStore:
        cfg = self.config
        duration = cfg.duration
        m = self.metrics
        if duration <= 0:
            return m
        self.start()

        queue = self._queue
        heappop = heapq.heappop
        next_gap = self.arrivals.gap_function()
        node_u = self.rng_arrivals.random
        alloc_u = self.rng_alloc.random
        node_count = cfg.node_count
        node_views = self._node_views
        node_allocs = self._node_allocs
        replicas = self.replicas
        audit = self.audit
        next_arrival = next_gap()

        while True:
            if queue and (queue[0][0] <= next_arrival or next_arrival >= duration):
                t, prio, _, kind, payload = queue[0]
                if t > duration or (t == duration and prio != TICK):
                    break
                heappop(queue)
                self.clock = t
                if kind == "tick":
                    self.handle_window_tick()
                elif kind == "delivery":
                    self.handle_update_delivery(*payload)
                elif kind == "issue":
                    if self._live(payload) is not None:
                        self.handle_update_issue(payload[0])
                elif kind == "extraneous":
                    if self._live(payload) is not None:
                        self.handle_extraneous_change(payload[0])
                elif kind == "churn":
                    self.handle_churn_step()
                continue
            if next_arrival >= duration:
                break
            # request arrival
            self.clock = next_arrival
            node = int(node_u() * node_count)
            u = alloc_u()
            view = node_views[node]
            if audit:
                self._audit_view(view)
            self._window_generated += 1
            m.generated_requests += 1
            alloc = node_allocs[node]
            if alloc.version != view.version:
                alloc.refresh(view)
            ids = alloc.ids
            rep = replicas.get(ids[bisect_right(alloc.cum, u)]) if ids else None
            if rep is None or not rep.alive:
                m.lost_requests += 1
                self._window_lost += 1
            else:
                rep.window_arrivals += 1
            next_arrival += next_gap()

        self._finish()
        return m

    def _finish(self) -> None:
        # arrivals after the last whole-second tick still count toward totals
        for rid, rep in sorted(self.replicas.items()):
            if rep.alive:
                self._ow_arrivals[rid] += rep.window_arrivals
                self._ow_capacity[rid] += honored_capacity(rep) * (self.config.duration % 1.0)
                rep.window_arrivals = 0
                self._flush_overload(rid)
        if self._window_generated:
            self.metrics.request_series.append(
                (self.config.duration, self._window_generated, self._window_lost, 0.0)
            )


def run(config: ScenarioConfig, audit: bool = False) -> MetricsStore:
    """Simulate ``config`` from t=0 to its duration and return the collected metrics."""
    return Simulation(config, audit=audit).run()
