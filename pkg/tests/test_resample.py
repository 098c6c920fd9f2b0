import numpy as np
import pytest

from trajforge.errors import ConfigError, TooShort
from trajforge.resample import (ResamplePolicy, dynamic_resample, interval_indices,
                                interval_resample, resampled_length, sampling_ratio)


@pytest.fixture
def policy():
    return ResamplePolicy()


def test_ratio_reference_values(policy):
    assert sampling_ratio(36, policy) == 1.0
    assert sampling_ratio(600, policy) == pytest.approx(0.35)
    assert sampling_ratio(100, policy) == pytest.approx(0.5718, abs=1e-4)
    assert sampling_ratio(5, policy) == 1.0
    assert sampling_ratio(10_000, policy) == 0.35


def test_ratio_nonincreasing_and_length_bounded(policy):
    assert policy.m_max == 210
    ratios = [sampling_ratio(n, policy) for n in range(2, 6001)]
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    lengths = [resampled_length(n, policy) for n in range(2, 6001)]
    assert max(lengths) <= 210
    assert all(2 <= m <= n for n, m in zip(range(2, 6001), lengths))


def test_dynamic_resample_short_is_identity(random_walk, policy):
    traj = random_walk("w", 30, seed=1)
    assert dynamic_resample(traj, policy) is traj


def test_dynamic_resample_keeps_endpoints(random_walk, policy):
    traj = random_walk("w", 1000, seed=2)
    out = dynamic_resample(traj, policy)
    assert len(out) == resampled_length(1000, policy) == 210
    assert out.data[0].tolist() == traj.data[0].tolist()
    assert out.data[-1].tolist() == traj.data[-1].tolist()
    assert np.all(np.diff(out.t) > 0)
    assert set(out.t.tolist()) <= set(traj.t.tolist())


def test_interval_resample_gaps_are_exact(random_walk):
    rng = np.random.default_rng(7)
    for i in range(1000):
        n = int(rng.integers(12, 200))
        traj = random_walk(f"t{i}", n, seed=i)
        for dt in (2, 3, 5):
            out = interval_resample(traj, dt)
            assert np.all(np.diff(out.t) == dt)
            assert out.t[0] == traj.t[0]


def test_interval_resample_edge_cases(random_walk):
    traj = random_walk("w", 3, seed=0)
    assert interval_resample(traj, 1) == traj
    with pytest.raises(TooShort):
        interval_resample(traj, 5)
    assert interval_indices(10, 3).tolist() == [0, 3, 6, 9]


def test_policy_validation():
    with pytest.raises(ConfigError):
        ResamplePolicy(n_min=700, n_max=600)
    with pytest.raises(ConfigError):
        ResamplePolicy(interval_choices=(0, 2))
    assert ResamplePolicy(interval_choices=[3, 5]).interval_choices == (3, 5)


def test_jittered_resample_stays_in_cells(random_walk):
    policy = ResamplePolicy(jitter=True)
    traj = random_walk("w", 400, seed=3)
    centred = dynamic_resample(traj, ResamplePolicy())
    for seed in range(20):
        out = dynamic_resample(traj, policy, seed)
        assert len(out) == len(centred)
        assert np.all(np.diff(out.t) > 0)
        assert out.t[0] == traj.t[0] and out.t[-1] == traj.t[-1]
    assert dynamic_resample(traj, policy, 4) == dynamic_resample(traj, policy, 4)
    assert dynamic_resample(traj, policy) == centred
