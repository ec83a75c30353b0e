"""Shared fixtures: small deterministic clouds and one session-scoped street scene.

The street scene is expensive (about 2 s to sample), so every test that only
needs realistic geometry shares a single instance. Tests that mutate nothing
may use it freely; anything destructive must build its own.
"""

import numpy as np
import pytest

from voxloc.config import PipelineConfig
from voxloc.synthetic import SceneSpec, generate_synthetic_scene


@pytest.fixture(scope="session")
def street_scene():
    """Default bent-street scene: (reference cloud, scans, ground truth)."""
    return generate_synthetic_scene(7, SceneSpec())


@pytest.fixture(scope="session")
def small_scene():
    """A short, light scene for tests that just need plausible structure."""
    spec = SceneSpec(
        street_length=20.0,
        car_count=4,
        scan_count=6,
        points_per_scan=4000,
        surface_density=150.0,
        bend_degrees=0.0,
    )
    return generate_synthetic_scene(3, spec)


@pytest.fixture
def config():
    return PipelineConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(42)
