import time
from functools import lru_cache

import pytest

from lbsim.cli import preset_config
from lbsim.engine import run
from lbsim.model import HETERO_MIX, ScenarioConfig, Strategy, WorkloadSpec


def make_config(strategy=Strategy.MAX_CAP, **kw):
    kw.setdefault("workload", WorkloadSpec(rate_fraction=0.8))
    kw.setdefault("capacities", HETERO_MIX)
    kw.setdefault("duration", 60.0)
    kw.setdefault("node_count", 64)
    return ScenarioConfig(strategy=strategy, **kw)


@lru_cache(maxsize=None)
def preset_run(name, seed, **overrides):
    """Full-length preset run, shared by every test that asks for the same one."""
    start = time.perf_counter()
    store = run(preset_config(name, seed=seed, **overrides))
    WALL_TIMES[(name, seed, tuple(sorted(overrides.items())))] = time.perf_counter() - start
    return store


# wall-clock seconds per distinct preset_run call
WALL_TIMES = {}


@pytest.fixture
def config_factory():
    return make_config
