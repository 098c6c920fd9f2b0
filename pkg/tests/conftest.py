"""Shared fixtures: trajectory builders, a small synthetic dataset, tiny model configs."""

import math

import numpy as np
import pytest

from trajforge.geo import meters_to_degrees
from trajforge.model import ModelConfig
from trajforge.synth import SynthSpec, generate
from trajforge.trajectory import Trajectory

ORIGIN = (-8.62, 41.15)


def track_from_offsets(traj_id, xy_m, t, origin=ORIGIN, meta=None):
    """Trajectory from planar (x, y) meter offsets around origin, rounded to 6 decimals."""
    xy_m = np.asarray(xy_m, dtype=np.float64)
    dlng, dlat = meters_to_degrees(xy_m[:, 0], xy_m[:, 1], origin[1])
    rows = np.column_stack([np.round(origin[0] + dlng, 6), np.round(origin[1] + dlat, 6),
                            np.asarray(t, dtype=np.float64)])
    return Trajectory(traj_id, rows, meta)


@pytest.fixture
def make_line():
    """Straight eastbound track at constant speed on integer seconds."""
    def build(traj_id="line", n=60, speed_ms=10.0, t0=0, heading_deg=90.0):
        k = np.arange(n, dtype=np.float64)
        rad = math.radians(heading_deg)
        xy = np.column_stack([k * speed_ms * math.sin(rad), k * speed_ms * math.cos(rad)])
        return track_from_offsets(traj_id, xy, t0 + k)
    return build


@pytest.fixture
def make_track():
    return track_from_offsets


@pytest.fixture
def random_walk():
    """Seeded smooth random tracks on the 1 Hz grid."""
    def build(traj_id, n, seed):
        rng = np.random.default_rng(seed)
        heading = np.cumsum(rng.normal(0.0, 0.3, n))
        step = rng.uniform(5.0, 15.0, n)
        xy = np.cumsum(np.column_stack([step * np.sin(heading), step * np.cos(heading)]), axis=0)
        xy -= xy[0]
        return track_from_offsets(traj_id, xy, np.arange(n, dtype=np.float64))
    return build


@pytest.fixture(scope="session")
def synth_dataset():
    return generate(SynthSpec(n_traj=16, seed=3))


@pytest.fixture
def tiny_config():
    return ModelConfig(d_model=8, encoder_blocks=1, decoder_blocks=1, heads=1, pad_len=24,
                       max_len=64, batch_size=4, epochs=2, patience=5, val_fraction=0.25,
                       seed=11)


@pytest.fixture
def small_config():
    return ModelConfig(d_model=16, encoder_blocks=2, decoder_blocks=1, heads=2, pad_len=32,
                       max_len=128, batch_size=8, epochs=3, patience=5, val_fraction=0.25,
                       seed=5)
