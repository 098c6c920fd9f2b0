"""
Adaptive trajectory resampling.

Dynamic multi-scale resampling keeps a length-dependent share of points:
R(n) = 1 for n <= n_min, R_min for n >= n_max and
1 - (1 - R_min) * ln(n - n_min + 1) / ln(n_max - n_min + 1) in between,
with the output capped at m_max = round(R_min * n_max) points.

Interval consistent resampling thins a 1 Hz trajectory to a fixed step.
"""

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from trajforge.errors import ConfigError, TooShort
from trajforge.trajectory import Trajectory
from trajforge.utils import SeedLike, make_rng, round_half_up


@dataclass(frozen=True)
class ResamplePolicy:
    """Thresholds of the adaptive resampler."""

    n_min: int = field(default=36, metadata={"help": "length kept whole (points)"})
    n_max: int = field(default=600, metadata={"help": "length reaching the minimum ratio"})
    r_min: float = field(default=0.35, metadata={"help": "minimum sampling ratio"})
    interval_dt: int = field(default=1, metadata={"help": "fixed thinning step (s) for previews"})
    interval_choices: Tuple[int, ...] = field(
        default=(1, 2, 3, 5), metadata={"help": "thinning steps drawn per trajectory in pretraining"})
    jitter: bool = field(default=False, metadata={"help": "draw interior indices inside their stride cells"})

    def __post_init__(self):
        if not 2 <= self.n_min < self.n_max:
            raise ConfigError("resample: need 2 <= n_min < n_max")
        if not 0 < self.r_min <= 1:
            raise ConfigError("resample.r_min must be in (0, 1]")
        if self.interval_dt < 1 or not self.interval_choices or min(self.interval_choices) < 1:
            raise ConfigError("resample: interval steps must be integers >= 1")
        object.__setattr__(self, "interval_choices", tuple(int(v) for v in self.interval_choices))

    @property
    def m_max(self) -> int:
        return round_half_up(self.r_min * self.n_max)


def sampling_ratio(n: int, policy: ResamplePolicy) -> float:
    """
    Share of points kept for a trajectory of n points.

    Args:
        n: Trajectory length (>= 1)
        policy: Resampling thresholds

    Returns:
        float: Ratio in [r_min, 1], nonincreasing in n
    """
    if n <= policy.n_min:
        return 1.0
    if n >= policy.n_max:
        return policy.r_min
    phi = math.log(n - policy.n_min + 1) / math.log(policy.n_max - policy.n_min + 1)
    return 1.0 - (1.0 - policy.r_min) * phi


def resampled_length(n: int, policy: ResamplePolicy) -> int:
    """Output length of dynamic_resample for an input of n points."""
    m = min(round_half_up(sampling_ratio(n, policy) * n), policy.m_max)
    return max(2, min(m, n))


def dynamic_resample(traj: Trajectory, policy: ResamplePolicy,
                     rng_seed: SeedLike = None) -> Trajectory:
    """
    Keep resampled_length(n) points at uniformly spaced indices.

    The first and last points are always kept and timestamps are untouched.
    With policy.jitter and an rng_seed, each interior index is drawn uniformly
    inside its stride cell instead of taking the cell centre.

    Args:
        traj: Input trajectory
        policy: Resampling thresholds
        rng_seed: Seed or generator for the jittered variant

    Returns:
        Trajectory: Subsequence of the input
    """
    n = len(traj)
    m = resampled_length(n, policy)
    if m == n:
        return traj
    indices = np.floor(np.linspace(0, n - 1, m) + 0.5).astype(np.int64)
    if policy.jitter and rng_seed is not None and m > 2:
        # cell k spans (edges[k], edges[k+1]) between neighbouring centres
        edges = np.linspace(0, n - 1, 2 * m - 1)[1::2]
        low = np.floor(edges[:-1]).astype(np.int64) + 1
        high = np.floor(edges[1:]).astype(np.int64)
        indices[1:-1] = low + np.floor(make_rng(rng_seed).random(m - 2) * (high - low + 1)).astype(np.int64)
    return traj.select(indices)


def interval_indices(n: int, dt: int) -> np.ndarray:
    """Indices 0, dt, 2*dt, ... below n."""
    return np.arange(0, n, int(dt), dtype=np.int64)


def interval_resample(traj: Trajectory, dt: int) -> Trajectory:
    """
    Keep every dt-th point starting with the first.

    On a 1 Hz trajectory every output gap equals dt seconds.

    Args:
        traj: Trajectory on the 1 Hz grid
        dt: Step in points/seconds (>= 1)

    Returns:
        Trajectory: Thinned trajectory

    Raises:
        TooShort: when fewer than 2 points would remain
    """
    if dt < 1:
        raise TooShort(f"interval step must be >= 1, got {dt}")
    indices = interval_indices(len(traj), dt)
    if len(indices) < 2:
        raise TooShort(f"{traj.id}: {len(traj)} points leave fewer than 2 at step {dt}",
                       id=traj.id, n=len(traj), dt=dt)
    if dt == 1:
        return traj
    return traj.select(indices)
