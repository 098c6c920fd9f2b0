import math

import numpy as np
import pytest

from trajforge.errors import ConfigError
from trajforge.geo import step_speeds_kmh
from trajforge.preprocess import FilterPolicy, apply_filters
from trajforge.synth import SynthSpec, generate, generate_one
from trajforge.utils import EARTH_RADIUS_M


def distance_to_polyline(x, y, vertices):
    best = math.inf
    for (ax, ay), (bx, by) in zip(vertices[:-1], vertices[1:]):
        dx, dy = bx - ax, by - ay
        length2 = dx * dx + dy * dy
        u = 0.0 if length2 == 0 else min(1.0, max(0.0, ((x - ax) * dx + (y - ay) * dy) / length2))
        best = min(best, math.hypot(x - ax - u * dx, y - ay - u * dy))
    return best


def test_generation_is_seeded(synth_dataset):
    again = generate(SynthSpec(n_traj=16, seed=3))
    assert again.trajectories == synth_dataset.trajectories
    assert again.provenance == "synth:seed=3"
    other = generate(SynthSpec(n_traj=16, seed=4))
    assert other.trajectories != synth_dataset.trajectories


def test_every_trajectory_passes_filters(synth_dataset):
    assert len(synth_dataset) == 16
    for traj in synth_dataset:
        assert apply_filters(traj, FilterPolicy()).accepted, traj.id
        assert np.all(np.diff(traj.t) == 1.0)
        assert traj.meta["source"] == "synth"


def test_workers_do_not_change_output():
    spec = SynthSpec(n_traj=12, seed=8)
    assert generate(spec, workers=1).trajectories == generate(spec, workers=4).trajectories
    assert generate_one(spec, 5) == generate(spec).trajectories[5]


def test_noiseless_points_follow_waypoints():
    spec = SynthSpec(n_traj=6, noise_sigma_m=0.0, seed=2)
    k = math.radians(1.0) * EARTH_RADIUS_M
    for traj in generate(spec):
        way = np.asarray(traj.meta["waypoints"])
        scale = k * math.cos(math.radians(way[:, 1].mean()))
        vertices = np.column_stack([(way[:, 0] - way[0, 0]) * scale, (way[:, 1] - way[0, 1]) * k])
        for lng, lat in traj.data[:, :2]:
            x, y = (lng - way[0, 0]) * scale, (lat - way[0, 1]) * k
            assert distance_to_polyline(x, y, vertices) <= 0.5


def test_speed_matches_metadata(synth_dataset):
    for traj in synth_dataset:
        median = float(np.median(step_speeds_kmh(traj.lng, traj.lat, traj.t)))
        assert abs(median - traj.meta["speed_kmh"]) <= 7.6, traj.id
        assert 20.0 <= traj.meta["speed_kmh"] <= 80.0


def test_modes_use_equal_speed_bands():
    spec = SynthSpec(n_traj=30, modes=("walk", "bike", "car"), seed=1)
    assert spec.speed_band(1) == pytest.approx((40.0, 60.0))
    for traj in generate(spec):
        low, high = spec.speed_band(spec.modes.index(traj.meta["mode"]))
        assert low <= traj.meta["speed_kmh"] <= high


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(speed_min_kmh=0.5)
    with pytest.raises(ConfigError):
        SynthSpec(bbox=(1.0, 1.0, 0.0, 2.0))
    with pytest.raises(ConfigError):
        SynthSpec(modes=("car", "car"))
    with pytest.raises(ConfigError):
        generate_one(SynthSpec(bbox=(0.0, 0.0, 1e-5, 1e-5)), 0)
