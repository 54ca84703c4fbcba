"""Shared fixtures: small deterministic scenarios and a solve cache.

The cache lets the slower end-to-end tests reuse identical seeded runs
instead of recomputing them, and keeps every produced state around so the
feasibility audit can sweep all of them at the end.
"""

import dataclasses

import numpy as np
import pytest

from mestars.ao import run_scheme
from mestars.channel import sample_realization
from mestars.config import AlgorithmConfig, SystemConfig, with_overrides


def small_system(**kw) -> SystemConfig:
    base = dict(num_bs_antennas=4, num_elements=4, num_users=2, num_paths=2)
    base.update(kw)
    return SystemConfig(**base).validate()


@pytest.fixture
def small_cfg() -> SystemConfig:
    return small_system()


@pytest.fixture
def alg() -> AlgorithmConfig:
    return AlgorithmConfig().validate()


class RunCache:
    """Memoized seeded solves keyed by (scheme, config, seed)."""

    def __init__(self):
        self._memo = {}
        self.results = []          # (scheme, cfg, result) in creation order

    def get(self, scheme: str, cfg: SystemConfig, seed: int,
            alg: AlgorithmConfig | None = None):
        alg = alg or AlgorithmConfig().validate()
        key = (scheme, dataclasses.astuple(cfg), dataclasses.astuple(alg),
               seed)
        if key not in self._memo:
            real = sample_realization(cfg, seed)
            res = run_scheme(scheme, real, cfg, alg)
            self._memo[key] = res
            self.results.append((scheme, cfg, res))
        return self._memo[key]


@pytest.fixture(scope="session")
def run_cache() -> RunCache:
    return RunCache()


def table_cfg(**kw) -> SystemConfig:
    cfg = SystemConfig().validate()
    return with_overrides(cfg, **kw) if kw else cfg


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
