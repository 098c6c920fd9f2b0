import math

import numpy as np
import pytest
from scipy.stats import chisquare

from trajforge.errors import ConfigError, InvalidTrajectory, TooShort
from trajforge.geo import to_local_plane
from trajforge.masking import (MaskedTrajectory, MaskSpec, apply_strategy, mask_block,
                               mask_count, mask_key_points, mask_last_n, mask_random,
                               mask_trajectory, rdp_key_points, sample_strategy)
from trajforge.utils import STRATEGIES


def test_mask_count_clamps():
    assert mask_count(10, 0.5) == 5
    assert mask_count(4, 0.9) == 2
    assert mask_count(5, 0.01) == 1
    assert mask_count(7, 0.5) == 4


def check_partition(masked: MaskedTrajectory):
    n = masked.n
    hidden = set(masked.masked_indices.tolist())
    visible = set(masked.visible_indices.tolist())
    assert hidden.isdisjoint(visible)
    assert hidden | visible == set(range(n))
    assert 0 not in hidden
    assert 1 <= len(hidden) <= n - 2


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_strategy_contracts(random_walk, strategy):
    spec = MaskSpec()
    rng = np.random.default_rng(123)
    walks = {n: random_walk(f"w{n}", n, seed=n) for n in range(4, 41)}
    for draw in range(10_000):
        n = int(rng.integers(4, 41))
        traj = walks[n]
        masked = apply_strategy(traj, strategy, spec, (draw, n))
        check_partition(masked)
        expected = mask_count(n, spec.mask_ratio)
        if masked.strategy == "key_points":
            assert len(masked.masked_indices) <= expected
        else:
            assert len(masked.masked_indices) == expected
        if strategy == "block":
            assert np.all(np.diff(masked.masked_indices) == 1)
        if strategy == "last_n":
            assert masked.masked_indices.tolist() == list(range(n - expected, n))


def test_mixture_frequencies_within_three_sigma():
    spec = MaskSpec()
    rng = np.random.default_rng(2024)
    draws = 10_000
    names = [sample_strategy(spec, rng) for _ in range(draws)]
    for name, weight in zip(STRATEGIES, spec.mixture_weights):
        observed = names.count(name) / draws
        sigma = math.sqrt(weight * (1 - weight) / draws)
        assert abs(observed - weight) <= 3 * sigma, name


def test_fixed_strategy_overrides_mixture(random_walk):
    spec = MaskSpec(strategy="block")
    traj = random_walk("w", 30, seed=0)
    assert {mask_trajectory(traj, spec, s).strategy for s in range(50)} == {"block"}


def test_masking_is_seeded(random_walk):
    traj = random_walk("w", 50, seed=0)
    a = mask_trajectory(traj, MaskSpec(), (7, 1, 3))
    b = mask_trajectory(traj, MaskSpec(), (7, 1, 3))
    assert a.strategy == b.strategy
    assert a.masked_indices.tolist() == b.masked_indices.tolist()


def brute_force_rdp(plane, epsilon):
    """Recursive reference: lowest index of the maximum deviation, kept if > epsilon."""
    def deviation(i, s, e):
        ax, ay = plane[s]
        bx, by = plane[e]
        px, py = plane[i]
        dx, dy = bx - ax, by - ay
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            return math.hypot(px - ax, py - ay)
        return abs(dx * (py - ay) - dy * (px - ax)) / norm

    def recurse(s, e):
        if e - s < 2:
            return []
        best, best_d = None, -1.0
        for i in range(s + 1, e):
            d = deviation(i, s, e)
            if d > best_d:
                best, best_d = i, d
        if best_d > epsilon:
            return recurse(s, best) + [best] + recurse(best, e)
        return []

    return recurse(0, len(plane) - 1)


def test_rdp_matches_brute_force_oracle(make_track):
    rng = np.random.default_rng(99)
    for i in range(500):
        n = int(rng.integers(3, 13))
        xy = np.cumsum(rng.normal(0.0, 40.0, (n, 2)), axis=0)
        xy -= xy[0]
        traj = make_track(f"r{i}", xy, np.arange(n, dtype=float))
        plane = to_local_plane(traj.lng, traj.lat)
        assert rdp_key_points(traj, 25.0).tolist() == brute_force_rdp(plane, 25.0)


def test_rdp_finds_corner(make_track):
    x = np.r_[np.arange(0, 200, 10.0), np.full(20, 200.0)]
    y = np.r_[np.zeros(20), np.arange(0, 200, 10.0)]
    traj = make_track("L", np.column_stack([x, y]), np.arange(40, dtype=float))
    keys = rdp_key_points(traj, 25.0)
    assert keys.tolist() == [19] or keys.tolist() == [20]


def test_key_points_fall_back_to_random_on_straight_line(make_line):
    masked = mask_key_points(make_line(n=30), 0.5, 25.0, seed=1)
    assert masked.strategy == "random"
    assert len(masked.masked_indices) == 15


def test_key_points_capped(make_track):
    rng = np.random.default_rng(5)
    xy = np.cumsum(rng.normal(0.0, 200.0, (20, 2)), axis=0)
    traj = make_track("zig", xy - xy[0], np.arange(20, dtype=float))
    masked = mask_key_points(traj, 0.2, 1.0, seed=3)
    assert masked.strategy == "key_points"
    assert len(masked.masked_indices) == mask_count(20, 0.2)


def test_too_short_and_invalid_masks(random_walk):
    traj = random_walk("w", 3, seed=0)
    for fn in (lambda: mask_random(traj, 0.5, 0), lambda: mask_block(traj, 0.5, 0),
               lambda: mask_last_n(traj, 0.5), lambda: mask_key_points(traj, 0.5, 25.0, 0)):
        with pytest.raises(TooShort):
            fn()
    longer = random_walk("w", 6, seed=0)
    with pytest.raises(InvalidTrajectory):
        MaskedTrajectory(longer, range(6))
    with pytest.raises(InvalidTrajectory):
        MaskedTrajectory(longer, [])


def test_merge_reassembles_base(random_walk):
    traj = random_walk("w", 20, seed=4)
    masked = mask_random(traj, 0.5, 8)
    assert masked.merge() == traj
    assert len(masked.visible) == 20 - len(masked.masked_indices)
    assert masked.visible.data[0].tolist() == traj.data[0].tolist()


def test_last_n_explicit_count(random_walk):
    traj = random_walk("w", 20, seed=4)
    assert mask_last_n(traj, 0.5, count=5).masked_indices.tolist() == [15, 16, 17, 18, 19]


def test_mask_spec_validation():
    with pytest.raises(ConfigError):
        MaskSpec(w_random=0.5)
    with pytest.raises(ConfigError):
        MaskSpec(mask_ratio=1.0)
    with pytest.raises(ConfigError):
        MaskSpec(strategy="spiral")


def test_random_mask_hits_every_index_equally(random_walk):
    traj = random_walk("w", 10, seed=0)
    draws = 10_000
    counts = np.zeros(len(traj))
    for seed in range(draws):
        counts[mask_random(traj, 0.5, seed).masked_indices] += 1
    p = mask_count(len(traj), 0.5) / (len(traj) - 1)
    sigma = math.sqrt(draws * p * (1 - p))
    assert counts[0] == 0
    # 4 sigma across the nine simultaneous index checks
    assert np.all(np.abs(counts[1:] - draws * p) <= 4 * sigma)


def test_block_start_uniform(random_walk):
    traj = random_walk("w", 20, seed=0)
    b = mask_count(20, 0.25)
    starts = [int(mask_block(traj, 0.25, seed).masked_indices[0]) for seed in range(10_000)]
    observed = np.bincount(starts, minlength=20 - b + 1)
    assert observed[0] == 0
    assert set(np.flatnonzero(observed).tolist()) == set(range(1, 20 - b + 1))
    assert chisquare(observed[1:]).pvalue > 1e-3


def test_mixture_covers_every_maskable_index(random_walk):
    traj = random_walk("w", 50, seed=2)
    hit = np.zeros(50, dtype=bool)
    by_strategy = {name: np.zeros(50, dtype=bool) for name in STRATEGIES}
    for seed in range(2000):
        masked = mask_trajectory(traj, MaskSpec(), seed)
        hit[masked.masked_indices] = True
        by_strategy[masked.strategy][masked.masked_indices] = True
    assert not hit[0]
    assert hit[1:].all()
    assert by_strategy["last_n"][-1]


def test_key_points_mask_every_zigzag_turn(make_track):
    leg, turns = 15, 8
    step = 10.0 / math.sqrt(2)
    xy = [(0.0, 0.0)]
    for k in range(turns + 1):
        sign = 1.0 if k % 2 == 0 else -1.0
        for _ in range(leg):
            x, y = xy[-1]
            xy.append((x + step, y + sign * step))
    n = len(xy)
    traj = make_track("zigzag", np.asarray(xy), np.arange(n, dtype=float))
    expected = [leg * (k + 1) for k in range(turns)]
    assert rdp_key_points(traj, 25.0).tolist() == expected
    masked = mask_key_points(traj, 0.5, 25.0, seed=4)
    assert masked.strategy == "key_points"
    assert masked.masked_indices.tolist() == expected
