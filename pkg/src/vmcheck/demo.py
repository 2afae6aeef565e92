"""The shipped demo: three regions with different slopes and a per-region fit."""

from __future__ import annotations

from functools import lru_cache

from vmcheck.models import ModelBundle, SimConfig, fit_grouped, simulate_dataset
from vmcheck.tables import ObservedTable

__all__ = ["DEMO_CONFIG", "demo_data", "demo_bundle"]

DEMO_CONFIG = SimConfig(n=40, slopes=(1.0, 2.5, 4.0), intercepts=(0.0, 0.5, 1.0), sigma=0.3, seed=7)
DEMO_DRAWS = 200
DEMO_FIT_SEED = 11


@lru_cache(maxsize=1)
def demo_data() -> ObservedTable:
    return simulate_dataset(DEMO_CONFIG)


@lru_cache(maxsize=1)
def demo_bundle() -> ModelBundle:
    return fit_grouped(demo_data(), "region", "x", None, DEMO_DRAWS, DEMO_FIT_SEED)
