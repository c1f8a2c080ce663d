"""Command-line entry point, scenario files and the named experiment presets."""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .engine import run
from .metrics import MetricsStore, class_overload, mean_overload_pct, write_csv
from .model import (
    HETERO_MIX,
    ChurnPlan,
    ConfigError,
    ExtraneousPlan,
    ScenarioConfig,
    Strategy,
    WorkloadSpec,
)

HOMOG_MIX = (10.0,) * 10

_HETERO = {"capacities": HETERO_MIX, "workload": "poisson", "rate_fraction": 0.8, "update_period": 1.0}
_PARETO = {"capacities": HETERO_MIX, "workload": "pareto", "alpha": 1.1, "kappa": 0.000346, "update_period": 1.0}
_CHURN = {"churn_interval": 60.0, "churn_pool": 50, "churn_start": 600.0}
# honored capacity averages 75% of nominal, and the load is 80% of that
_XLOAD = {
    "capacities": HETERO_MIX,
    "workload": "poisson",
    "rate_fraction": 0.6,
    "xload_interval": 1.0,
    "xload_low": 0.0,
    "xload_high": 0.5,
}

PRESETS: Dict[str, dict] = {
    "invload-hetero-80": {**_HETERO, "strategy": "InvLoad"},
    "availcap-hetero-80": {**_HETERO, "strategy": "AvailCap"},
    "maxcap-hetero-80": {**_HETERO, "strategy": "MaxCap"},
    "pareto-availcap": {**_PARETO, "strategy": "AvailCap"},
    "pareto-maxcap": {**_PARETO, "strategy": "MaxCap"},
    "dynamic-1-60": {**_HETERO, **_CHURN, "churn_swap": 1, "strategy": "MaxCap"},
    "dynamic-5-60": {**_HETERO, **_CHURN, "churn_swap": 5, "strategy": "MaxCap"},
    "dynamic-1-60-availcap": {**_HETERO, **_CHURN, "churn_swap": 1, "strategy": "AvailCap"},
    "dynamic-5-60-availcap": {**_HETERO, **_CHURN, "churn_swap": 5, "strategy": "AvailCap"},
    "xload-maxcap-u1": {**_XLOAD, "strategy": "MaxCap", "update_period": 1.0},
    "xload-maxcap-u10": {**_XLOAD, "strategy": "MaxCap", "update_period": 10.0},
    "xload-availcap-u1": {**_XLOAD, "strategy": "AvailCap", "update_period": 1.0},
    "xload-availcap-u10": {**_XLOAD, "strategy": "AvailCap", "update_period": 10.0},
    "homog-invload": {"capacities": HOMOG_MIX, "workload": "poisson", "rate_fraction": 0.8,
                      "update_period": 1.0, "strategy": "InvLoad"},
    "homog-maxcap": {"capacities": HOMOG_MIX, "workload": "poisson", "rate_fraction": 0.8,
                     "strategy": "MaxCap"},
}

INT_KEYS = {"node_count", "max_tree_depth", "overload_window", "replica_count", "churn_swap", "churn_pool", "seed"}
FLOAT_KEYS = {
    "duration", "update_period", "hop_delay", "lambda", "rate_fraction", "alpha", "kappa",
    "churn_interval", "churn_start", "xload_interval", "xload_low", "xload_high",
}
STR_KEYS = {"preset", "strategy", "workload", "capacities"}
KNOWN_KEYS = INT_KEYS | FLOAT_KEYS | STR_KEYS
CHURN_KEYS = ("churn_interval", "churn_swap", "churn_pool", "churn_start")
XLOAD_KEYS = ("xload_interval", "xload_low", "xload_high")


def list_presets() -> List[str]:
    return sorted(PRESETS)


def preset_config(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}", field="preset")
    mapping = dict(PRESETS[name])
    mapping.update(overrides)
    return config_from_mapping(mapping)


def _parse_capacities(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(c) for c in text)
    caps: List[float] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        value, _, repeat = part.partition("*")
        try:
            caps.extend([float(value)] * (int(repeat) if repeat else 1))
        except ValueError:
            raise ConfigError(f"bad capacity entry {part!r}", field="capacities") from None
    return tuple(caps)


def _coerce(key: str, raw, line: Optional[int] = None):
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown key {key!r}", field=key, line=line)
    try:
        if key in INT_KEYS:
            return int(raw)
        if key in FLOAT_KEYS:
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {raw!r}", field=key, line=line) from None
    return raw


def config_from_mapping(mapping: dict) -> ScenarioConfig:
    """Build and validate a config from flat scenario keys (preset already expanded)."""
    m = {k: _coerce(k, v) for k, v in mapping.items() if k != "preset"}
    if "strategy" not in m:
        raise ConfigError("missing required key", field="strategy")
    strategy = Strategy.parse(str(m["strategy"]))
    workload = WorkloadSpec(
        kind=str(m.get("workload", "poisson")).lower(),
        lam=m.get("lambda"),
        alpha=m.get("alpha"),
        kappa=m.get("kappa"),
        rate_fraction=m.get("rate_fraction"),
    )
    churn = None
    if any(k in m for k in CHURN_KEYS):
        d = ChurnPlan()
        churn = ChurnPlan(
            interval=m.get("churn_interval", d.interval),
            swap_count=m.get("churn_swap", d.swap_count),
            pool_size=m.get("churn_pool", d.pool_size),
            start=m.get("churn_start", d.start),
        )
    extraneous = None
    if any(k in m for k in XLOAD_KEYS):
        d = ExtraneousPlan()
        extraneous = ExtraneousPlan(
            interval=m.get("xload_interval", d.interval),
            fraction_low=m.get("xload_low", d.fraction_low),
            fraction_high=m.get("xload_high", d.fraction_high),
        )
    kw = {}
    for key in ("node_count", "duration", "update_period", "hop_delay", "max_tree_depth",
                "overload_window", "replica_count", "seed"):
        if key in m:
            kw[key] = m[key]
    caps = _parse_capacities(m["capacities"]) if "capacities" in m else None
    cfg = ScenarioConfig(strategy=strategy, workload=workload, capacities=caps,
                         churn=churn, extraneous=extraneous, **kw)
    return cfg.validate()


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a flat ``key: value`` scenario document.

    A ``preset`` key pulls in that preset's settings; explicit keys win.
    """
    mapping: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if not sep or not key or " " in key:
            raise ConfigError(f"expected 'key: value', got {raw.strip()!r}", line=lineno)
        if key in mapping:
            raise ConfigError("duplicate key", field=key, line=lineno)
        mapping[key] = _coerce(key, value, line=lineno)
    if "preset" in mapping:
        name = str(mapping.pop("preset"))
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}", field="preset")
        mapping = {**PRESETS[name], **mapping}
    return config_from_mapping(mapping)


def serialize_scenario(cfg: ScenarioConfig) -> str:
    lines = [f"strategy: {cfg.strategy.value}"]
    wl = cfg.workload
    lines.append(f"workload: {wl.kind}")
    for key, value in (("lambda", wl.lam), ("rate_fraction", wl.rate_fraction),
                       ("alpha", wl.alpha), ("kappa", wl.kappa)):
        if value is not None:
            lines.append(f"{key}: {value!r}")
    if cfg.capacities is not None:
        lines.append("capacities: " + ", ".join(repr(c) for c in cfg.capacities))
    if cfg.replica_count is not None:
        lines.append(f"replica_count: {cfg.replica_count}")
    lines += [
        f"node_count: {cfg.node_count}",
        f"duration: {cfg.duration!r}",
        f"update_period: {cfg.update_period!r}",
        f"hop_delay: {cfg.hop_delay!r}",
        f"max_tree_depth: {cfg.max_tree_depth}",
        f"overload_window: {cfg.overload_window}",
        f"seed: {cfg.seed}",
    ]
    if cfg.churn is not None:
        c = cfg.churn
        lines += [f"churn_interval: {c.interval!r}", f"churn_swap: {c.swap_count}",
                  f"churn_pool: {c.pool_size}", f"churn_start: {c.start!r}"]
    if cfg.extraneous is not None:
        x = cfg.extraneous
        lines += [f"xload_interval: {x.interval!r}", f"xload_low: {x.fraction_low!r}",
                  f"xload_high: {x.fraction_high!r}"]
    return "\n".join(lines) + "\n"


def summary_line(store: MetricsStore, elapsed: float) -> str:
    pct = mean_overload_pct(store)
    classes = " ".join(f"{k}={v:.3f}" for k, v in sorted(class_overload(store).items()))
    return (
        f"strategy={store.strategy} seed={store.seed} requests={store.generated_requests} "
        f"lost={store.lost_requests} updates={store.updates_issued} overhead={store.overhead} "
        f"mean_overload={'nan' if pct is None else f'{pct:.4f}'} {classes} wall={elapsed:.1f}s"
    )


def _run_one(cfg: ScenarioConfig, out: Path, audit: bool) -> str:
    start = time.perf_counter()
    store = run(cfg, audit=audit)
    write_csv(store, out)
    return summary_line(store, time.perf_counter() - start)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbsim", description="Simulate decentralized replica load balancing.")
    p.add_argument("scenario", nargs="?", help="scenario file (flat key: value)")
    p.add_argument("--preset", help="named experiment preset")
    p.add_argument("--seed", type=int, help="seed (base seed with --repeat)")
    p.add_argument("--out", help="output directory (default: $LBSIM_OUT or ./lbsim-out)")
    p.add_argument("--repeat", type=int, default=1, help="run N seeds: seed, seed+1, ...")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for --repeat")
    p.add_argument("--audit", action="store_true", help="check every decision against update staleness")
    p.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        print("\n".join(list_presets()))
        return 0
    try:
        if args.scenario and args.preset:
            raise ConfigError("give a scenario file or --preset, not both")
        if args.scenario:
            try:
                text = Path(args.scenario).read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"cannot read scenario {args.scenario}: {e.strerror}") from None
            cfg = parse_scenario(text)
        elif args.preset:
            if args.preset not in PRESETS:
                raise ConfigError(f"unknown preset {args.preset!r}")
            cfg = preset_config(args.preset)
        else:
            raise ConfigError("need a scenario file or --preset")
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed).validate()
        if args.repeat < 1:
            raise ConfigError("--repeat must be >= 1")
    except ConfigError as e:
        print(f"lbsim: config error: {e}", file=sys.stderr)
        return 1

    out = Path(args.out or os.environ.get("LBSIM_OUT") or "lbsim-out")
    if args.repeat == 1:
        jobs = [(cfg, out)]
    else:
        jobs = [(cfg.with_overrides(seed=cfg.seed + i), out / f"seed-{cfg.seed + i}") for i in range(args.repeat)]
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_run_one, c, o, args.audit) for c, o in jobs]
                lines = [f.result() for f in futures]
        else:
            lines = [_run_one(c, o, args.audit) for c, o in jobs]
    except Exception as e:  # noqa: BLE001 - any runtime failure maps to exit code 2
        print(f"lbsim: runtime error: {e}", file=sys.stderr)
        return 2
    for line in lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
