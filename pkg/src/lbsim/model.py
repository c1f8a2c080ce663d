"""Domain types shared by the simulator: replicas, LBI updates, peer views, scenarios."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Set, Tuple


class ConfigError(ValueError):
    """Raised for an invalid scenario. ``field`` names the offending key when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class DomainError(ValueError):
    pass


class NoReplicaAvailable(LookupError):
    pass


class Strategy(str, enum.Enum):
    INV_LOAD = "InvLoad"
    AVAIL_CAP = "AvailCap"
    MAX_CAP = "MaxCap"

    @property
    def periodic(self) -> bool:
        return self is not Strategy.MAX_CAP

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        key = text.replace("-", "").replace("_", "").lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        raise ConfigError(f"unknown strategy {text!r}", field="strategy")


class UpdateKind(str, enum.Enum):
    LOAD = "Load"
    AVAIL_CAP = "AvailCap"
    CONTRACT = "Contract"
    BIRTH = "Birth"
    INVALIDATION = "Invalidation"


# capacity classes from the Gnutella upload measurements: dial-up, broadband, high-end
CAPACITY_CLASSES = ((0.1, 1.0), (0.6, 10.0), (0.3, 100.0))
CLASS_LABELS = {1.0: "low", 10.0: "mid", 100.0: "high"}


def capacity_class(capacity: float) -> str:
    return CLASS_LABELS.get(float(capacity), "other")


def sample_capacity(u: float) -> float:
    """Map a uniform draw in [0, 1) onto the 1 / 10 / 100 req/s capacity mix."""
    if not 0.0 <= u < 1.0:
        raise DomainError(f"u must lie in [0, 1), got {u}")
    acc = 0.0
    for prob, cap in CAPACITY_CLASSES:
        acc += prob
        if u < acc:
            return cap
    return CAPACITY_CLASSES[-1][1]


@dataclass
class Replica:
    id: int
    max_capacity: float
    extraneous_load: float = 0.0
    window_arrivals: int = 0
    alive: bool = True
    birth_time: Optional[float] = None
    death_time: Optional[float] = None

    def __post_init__(self):
        if not self.max_capacity > 0:
            raise ConfigError(f"replica {self.id} needs max_capacity > 0", field="capacities")
        self.set_extraneous(self.extraneous_load)

    def set_extraneous(self, load: float) -> None:
        if not 0.0 <= load <= self.max_capacity:
            raise DomainError(
                f"extraneous load {load} outside [0, {self.max_capacity}] for replica {self.id}"
            )
        self.extraneous_load = load


def honored_capacity(replica: Replica) -> float:
    """Maximum capacity less the extraneous load the replica is carrying."""
    if replica.extraneous_load == 0:
        return replica.max_capacity
    return replica.max_capacity - replica.extraneous_load


@dataclass(frozen=True)
class LbiUpdate:
    replica_id: int
    kind: UpdateKind
    value: float
    issue_time: float
    # Birth carries the initial LBI so peers can weight a fresh replica at once
    load: float = 0.0
    avail: float = 0.0

    def __post_init__(self):
        if self.kind in (UpdateKind.LOAD, UpdateKind.AVAIL_CAP, UpdateKind.CONTRACT) and self.value < 0:
            raise DomainError(f"{self.kind.value} update value must be >= 0, got {self.value}")


@dataclass
class CacheEntry:
    load: float = 0.0
    avail: float = 0.0
    contract: float = 0.0
    issue_time: float = 0.0
    receipt_time: float = 0.0


@dataclass
class PeerView:
    """Cached LBI held by the peers at one tree level.

    All nodes at the same level receive every update at the same instant, so
    they hold identical caches; ``nodes`` is how many peers share this view.
    """

    node_id: int
    tree_level: int
    nodes: int = 1
    cache: Dict[int, CacheEntry] = field(default_factory=dict)
    known_alive: Set[int] = field(default_factory=set)
    version: int = 0

    def apply(self, update: LbiUpdate, now: float) -> None:
        rid = update.replica_id
        kind = update.kind
        if kind is UpdateKind.INVALIDATION:
            self.known_alive.discard(rid)
            self.cache.pop(rid, None)
        elif kind is UpdateKind.BIRTH:
            self.known_alive.add(rid)
            self.cache[rid] = CacheEntry(
                load=update.load,
                avail=update.avail,
                contract=update.value,
                issue_time=update.issue_time,
                receipt_time=now,
            )
        else:
            entry = self.cache.get(rid)
            if entry is None:
                # update for a replica this level does not know (yet); nothing to refresh
                return
            if kind is UpdateKind.LOAD:
                entry.load = update.value
            elif kind is UpdateKind.AVAIL_CAP:
                entry.avail = update.value
            else:
                entry.contract = update.value
            entry.issue_time = update.issue_time
            entry.receipt_time = now
        self.version += 1


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "poisson"
    lam: Optional[float] = None
    alpha: Optional[float] = None
    kappa: Optional[float] = None
    rate_fraction: Optional[float] = None

    def validate(self) -> None:
        if self.kind not in ("poisson", "pareto"):
            raise ConfigError(f"unknown workload {self.kind!r}", field="workload")
        if self.kind == "poisson":
            if self.lam is None and self.rate_fraction is None:
                raise ConfigError("poisson workload needs lambda or rate_fraction", field="lambda")
            if self.lam is not None and not self.lam > 0:
                raise ConfigError("must be > 0", field="lambda")
            if self.rate_fraction is not None and not self.rate_fraction > 0:
                raise ConfigError("must be > 0", field="rate_fraction")
        else:
            if self.alpha is None or not self.alpha > 0:
                raise ConfigError("pareto workload needs alpha > 0", field="alpha")
            if self.kappa is None or not self.kappa > 0:
                raise ConfigError("pareto workload needs kappa > 0", field="kappa")


@dataclass(frozen=True)
class ChurnPlan:
    interval: float = 60.0
    swap_count: int = 1
    pool_size: int = 50
    start: float = 600.0


@dataclass(frozen=True)
class ExtraneousPlan:
    interval: float = 1.0
    fraction_low: float = 0.0
    fraction_high: float = 0.5


# the 1 / 10 / 100 mix at its expected class proportions over ten replicas
HETERO_MIX: Tuple[float, ...] = (1.0,) + (10.0,) * 6 + (100.0,) * 3


@dataclass(frozen=True)
class ScenarioConfig:
    strategy: Strategy
    workload: WorkloadSpec
    capacities: Optional[Tuple[float, ...]] = None
    replica_count: Optional[int] = None
    node_count: int = 1024
    duration: float = 3000.0
    update_period: float = 1.0
    hop_delay: float = 0.2
    max_tree_depth: int = 5
    # overload is judged over tumbling windows of this many seconds
    overload_window: int = 3
    churn: Optional[ChurnPlan] = None
    extraneous: Optional[ExtraneousPlan] = None
    seed: int = 0

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def validate(self) -> "ScenarioConfig":
        if not isinstance(self.strategy, Strategy):
            raise ConfigError("missing or invalid strategy", field="strategy")
        self.workload.validate()
        if self.capacities is None and self.replica_count is None:
            raise ConfigError("need capacities or replica_count", field="capacities")
        if self.capacities is not None:
            if len(self.capacities) == 0:
                raise ConfigError("at least one replica required", field="capacities")
            if any(not (c > 0 and math.isfinite(c)) for c in self.capacities):
                raise ConfigError("capacities must be positive", field="capacities")
        if self.replica_count is not None and self.replica_count < 1:
            raise ConfigError("must be >= 1", field="replica_count")
        if self.node_count < 1:
            raise ConfigError("must be >= 1", field="node_count")
        if not self.duration >= 0:
            raise ConfigError("must be >= 0", field="duration")
        if not self.update_period > 0:
            raise ConfigError("must be > 0", field="update_period")
        if not self.hop_delay >= 0:
            raise ConfigError("must be >= 0", field="hop_delay")
        if self.max_tree_depth < 1:
            raise ConfigError("must be >= 1", field="max_tree_depth")
        if self.overload_window < 1:
            raise ConfigError("must be >= 1 second", field="overload_window")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("must be a 64-bit unsigned integer", field="seed")
        n0 = self.initial_replica_count
        if self.churn is not None:
            c = self.churn
            if not c.interval > 0:
                raise ConfigError("must be > 0", field="churn_interval")
            if c.swap_count < 1:
                raise ConfigError("must be >= 1", field="churn_swap")
            if c.swap_count > n0:
                raise ConfigError(
                    f"swap count {c.swap_count} exceeds {n0} alive replicas", field="churn_swap"
                )
            if c.pool_size < n0 + c.swap_count:
                raise ConfigError(
                    f"pool of {c.pool_size} cannot supply {c.swap_count} fresh replicas", field="churn_pool"
                )
            if c.start < 0:
                raise ConfigError("must be >= 0", field="churn_start")
        if self.extraneous is not None:
            x = self.extraneous
            if not x.interval > 0:
                raise ConfigError("must be > 0", field="xload_interval")
            if not 0 <= x.fraction_low <= x.fraction_high <= 1:
                raise ConfigError("need 0 <= low <= high <= 1", field="xload_range")
        return self

    @property
    def initial_replica_count(self) -> int:
        if self.capacities is not None:
            return len(self.capacities)
        return int(self.replica_count or 0)

