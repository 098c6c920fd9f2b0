"""
Seeded synthetic trajectory generator.

Each trajectory visits 3-8 random waypoints inside a bounding box at a
constant speed, is sampled at 1 Hz on integer timestamps and carries
temporally correlated Gaussian position noise (AR(1), stationary standard
deviation noise_sigma_m). Candidates the default filters reject are redrawn,
so every output passes preprocessing unchanged.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from trajforge.errors import ConfigError
from trajforge.geo import meters_to_degrees, to_local_plane
from trajforge.preprocess import FilterPolicy, apply_filters
from trajforge.trajectory import Trajectory, TrajectoryDataset
from trajforge.utils import COORD_DECIMALS

logger = logging.getLogger(__name__)

# Porto city centre, the extent of a typical taxi corpus
DEFAULT_BBOX = (-8.64, 41.14, -8.59, 41.17)
START_TIME = 1_600_000_000
MAX_ATTEMPTS = 200


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings."""

    n_traj: int = field(default=200, metadata={"help": "number of trajectories"})
    min_waypoints: int = field(default=3, metadata={"help": "fewest waypoints per trajectory"})
    max_waypoints: int = field(default=8, metadata={"help": "most waypoints per trajectory"})
    speed_min_kmh: float = field(default=20.0, metadata={"help": "slowest travel speed"})
    speed_max_kmh: float = field(default=80.0, metadata={"help": "fastest travel speed"})
    noise_sigma_m: float = field(default=5.0, metadata={"help": "position noise std (m)"})
    noise_correlation: float = field(default=0.99, metadata={"help": "AR(1) noise coefficient per second"})
    bbox: Tuple[float, float, float, float] = field(
        default=DEFAULT_BBOX, metadata={"help": "min_lng, min_lat, max_lng, max_lat"})
    modes: Tuple[str, ...] = field(
        default=(), metadata={"help": "travel-mode labels, one per equal speed band"})
    seed: int = field(default=0, metadata={"help": "generator seed"})

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        object.__setattr__(self, "modes", tuple(str(m) for m in self.modes))
        policy = FilterPolicy()
        if self.n_traj < 0:
            raise ConfigError("synth.n_traj must be >= 0")
        if not 2 <= self.min_waypoints <= self.max_waypoints:
            raise ConfigError("synth waypoints need 2 <= min_waypoints <= max_waypoints")
        if not policy.min_speed_kmh < self.speed_min_kmh <= self.speed_max_kmh < policy.max_speed_kmh:
            raise ConfigError("synth speed range must lie inside the filter speed band")
        if self.noise_sigma_m < 0:
            raise ConfigError("synth.noise_sigma_m must be >= 0")
        if not 0 <= self.noise_correlation < 1:
            raise ConfigError("synth.noise_correlation must be in [0, 1)")
        if len(self.bbox) != 4 or self.bbox[0] >= self.bbox[2] or self.bbox[1] >= self.bbox[3]:
            raise ConfigError("synth.bbox must be (min_lng, min_lat, max_lng, max_lat)")
        if len(set(self.modes)) != len(self.modes):
            raise ConfigError("synth.modes must be distinct")

    def speed_band(self, mode_index: int) -> Tuple[float, float]:
        """Speed range of one travel mode."""
        width = (self.speed_max_kmh - self.speed_min_kmh) / len(self.modes)
        low = self.speed_min_kmh + mode_index * width
        return low, low + width


def correlated_noise(rng: np.random.Generator, n: int, sigma: float, rho: float) -> np.ndarray:
    """
    Stationary AR(1) noise, (n, 2) meters.

    Each axis follows e_k = rho * e_(k-1) + sqrt(1 - rho^2) * sigma * z_k with
    e_0 ~ N(0, sigma^2).
    """
    z = rng.standard_normal((n, 2)) * sigma
    if sigma == 0 or n == 0:
        return np.zeros((n, 2))
    drive = math.sqrt(1.0 - rho * rho) * z
    drive[0] = z[0]
    return lfilter([1.0], [1.0, -rho], drive, axis=0)


def _candidate(spec: SynthSpec, rng: np.random.Generator, traj_id: str,
               t0: int) -> Trajectory:
    min_lng, min_lat, max_lng, max_lat = spec.bbox
    k = int(rng.integers(spec.min_waypoints, spec.max_waypoints + 1))
    way_lng = rng.uniform(min_lng, max_lng, k)
    way_lat = rng.uniform(min_lat, max_lat, k)

    meta = {"source": "synth"}
    if spec.modes:
        mode_index = int(rng.integers(len(spec.modes)))
        low, high = spec.speed_band(mode_index)
        meta["mode"] = spec.modes[mode_index]
    else:
        low, high = spec.speed_min_kmh, spec.speed_max_kmh
    speed_ms = rng.uniform(low, high) / 3.6
    meta["speed_kmh"] = round(speed_ms * 3.6, 3)
    meta["waypoints"] = [[round(float(a), COORD_DECIMALS), round(float(b), COORD_DECIMALS)]
                         for a, b in zip(way_lng, way_lat)]

    ref_lat = float(way_lat.mean())
    plane = to_local_plane(way_lng, way_lat)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(plane, axis=0).T))])
    duration = int(arc[-1] // speed_ms)
    if duration < 1:
        duration = 1
    s = np.minimum(np.arange(duration + 1) * speed_ms, arc[-1])
    x = np.interp(s, arc, plane[:, 0])
    y = np.interp(s, arc, plane[:, 1])
    noise = correlated_noise(rng, len(s), spec.noise_sigma_m, spec.noise_correlation)
    dlng, dlat = meters_to_degrees(x + noise[:, 0], y + noise[:, 1], ref_lat)
    rows = np.column_stack([
        np.round(way_lng[0] + dlng, COORD_DECIMALS),
        np.round(way_lat[0] + dlat, COORD_DECIMALS),
        t0 + np.arange(len(s), dtype=np.float64),
    ])
    return Trajectory(traj_id, rows, meta)


def generate_one(spec: SynthSpec, index: int,
                 policy: Optional[FilterPolicy] = None) -> Trajectory:
    """
    Generate trajectory ``index`` of a dataset.

    Randomness comes from default_rng([seed, index]), so any index can be
    produced independently of the others.

    Raises:
        ConfigError: when no candidate passes the filters (bbox too small or
            too large for the speed range)
    """
    policy = policy or FilterPolicy()
    rng = np.random.default_rng([spec.seed, index])
    traj_id = f"synth-{index:06d}"
    t0 = START_TIME + index * 86_400
    for attempt in range(MAX_ATTEMPTS):
        candidate = _candidate(spec, rng, traj_id, t0)
        decision = apply_filters(candidate, policy)
        if decision.accepted:
            return candidate
        logger.debug("%s attempt %d rejected by %s", traj_id, attempt, decision.rule)
    raise ConfigError(f"{traj_id}: no candidate passed the filters in {MAX_ATTEMPTS} attempts",
                      index=index)


def generate(spec: SynthSpec, workers: int = 1, progress_callback=None) -> TrajectoryDataset:
    """
    Generate a seeded synthetic dataset.

    Args:
        spec: Generator settings
        workers: Thread count; the result does not depend on it
        progress_callback: Callback(done, total)

    Returns:
        TrajectoryDataset: spec.n_traj trajectories, all accepted by the
        default FilterPolicy
    """
    trajectories = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for done, traj in enumerate(pool.map(lambda i: generate_one(spec, i), range(spec.n_traj)), 1):
            trajectories.append(traj)
            if progress_callback:
                progress_callback(done, spec.n_traj)
    logger.info("Generated %d synthetic trajectories (seed %d)", len(trajectories), spec.seed)
    return TrajectoryDataset(tuple(trajectories), provenance=f"synth:seed={spec.seed}")
