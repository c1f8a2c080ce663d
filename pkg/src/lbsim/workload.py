"""Seeded random streams and request inter-arrival generators."""
from __future__ import annotations

import math
import random
from typing import Iterable

from .model import DomainError, WorkloadSpec


class RngStream:
    """A ``random.Random`` keyed by (seed, purpose label).

    String seeds go through SHA-512, so a given pair yields the same
    sequence in every process regardless of hash randomization, and
    different labels give unrelated sequences.
    """

    def __init__(self, seed: int, stream_label: str):
        self.seed = int(seed)
        self.stream_label = stream_label
        self._rng = random.Random(f"lbsim:{self.seed}:{stream_label}")
        self.random = self._rng.random
        self.uniform = self._rng.uniform
        self.sample = self._rng.sample

    def open_unit(self) -> float:
        """Uniform on the open interval (0, 1)."""
        u = self.random()
        while u == 0.0:
            u = self.random()
        return u


def poisson_interarrival(lam: float, u: float) -> float:
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must lie in (0, 1), got {u}")
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    return -math.log1p(-u) / lam


def pareto_interarrival(alpha: float, kappa: float, u: float) -> float:
    """Inverse of F(x) = 1 - (kappa / (x + kappa)) ** alpha."""
    if not 0.0 <= u < 1.0:
        raise DomainError(f"u must lie in [0, 1), got {u}")
    if not (alpha > 0 and kappa > 0):
        raise DomainError("alpha and kappa must be > 0")
    return kappa * ((1.0 - u) ** (-1.0 / alpha) - 1.0)


def pareto_cdf(alpha: float, kappa: float, x: float) -> float:
    return 1.0 - (kappa / (x + kappa)) ** alpha


def pareto_mean_rate(alpha: float, kappa: float) -> float:
    # for alpha <= 1 the mean gap is unbounded, so the long-run rate is zero
    if alpha <= 1:
        return 0.0
    return (alpha - 1.0) / kappa


def derive_lambda(rate_fraction: float, replica_capacities: Iterable[float]) -> float:
    caps = list(replica_capacities)
    if not caps:
        raise DomainError("need at least one capacity")
    if not rate_fraction > 0:
        raise DomainError("rate_fraction must be > 0")
    return rate_fraction * math.fsum(caps)


class ArrivalProcess:
    """Draws successive inter-arrival gaps for a workload from its own stream."""

    def __init__(self, spec: WorkloadSpec, rng: RngStream, lam: float | None = None):
        self.spec = spec
        self.rng = rng
        if spec.kind == "poisson":
            if lam is None:
                lam = spec.lam
            if lam is None or not lam > 0:
                raise DomainError("poisson arrivals need a positive rate")
            self.lam = lam
            self.mean_rate = lam
        else:
            self.lam = None
            self.mean_rate = pareto_mean_rate(spec.alpha, spec.kappa)

    def gap_function(self):
        """A fast zero-argument callable yielding successive gaps."""
        rand = self.rng.random
        log1p = math.log1p
        if self.lam is not None:
            scale = -1.0 / self.lam

            def gap():
                u = rand()
                while u == 0.0:
                    u = rand()
                return scale * log1p(-u)

            return gap
        kappa = self.spec.kappa
        exponent = -1.0 / self.spec.alpha

        def gap():
            return kappa * ((1.0 - rand()) ** exponent - 1.0)

        return gap

    def next_gap(self) -> float:
        if self.lam is not None:
            return poisson_interarrival(self.lam, self.rng.open_unit())
        return pareto_interarrival(self.spec.alpha, self.spec.kappa, self.rng.random())
