"""
Self-supervised trajectory masking.

Four strategies pick the set of hidden indices: random, block, key points
(RDP turning points) and last N. Indices are 0-based; index 0 is the
normalization anchor and is never masked. The hidden count is clamped to
[1, n - 2] so at least one target and two visible points remain.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from trajforge.errors import ConfigError, InvalidTrajectory, TooShort
from trajforge.geo import line_distances, to_local_plane
from trajforge.trajectory import Trajectory
from trajforge.utils import STRATEGIES, SeedLike, clamp, make_rng, round_half_up

logger = logging.getLogger(__name__)

MIN_MASKABLE_POINTS = 4


@dataclass(frozen=True)
class MaskSpec:
    """Masking ratio, RDP tolerance and the strategy mixture."""

    mask_ratio: float = field(default=0.5, metadata={"help": "share of points hidden"})
    rdp_epsilon_m: float = field(default=25.0, metadata={"help": "key-point RDP tolerance (m)"})
    w_random: float = field(default=0.70, metadata={"help": "mixture weight: random"})
    w_block: float = field(default=0.05, metadata={"help": "mixture weight: block"})
    w_key: float = field(default=0.15, metadata={"help": "mixture weight: key points"})
    w_lastn: float = field(default=0.10, metadata={"help": "mixture weight: last N"})
    strategy: Optional[str] = field(default=None, metadata={"help": "fixed strategy (overrides mixture)"})

    def __post_init__(self):
        if not 0 < self.mask_ratio < 1:
            raise ConfigError("mask.mask_ratio must be in (0, 1)")
        if self.rdp_epsilon_m < 0:
            raise ConfigError("mask.rdp_epsilon_m must be >= 0")
        weights = self.mixture_weights
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigError("mask mixture weights must be nonnegative and sum to 1")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigError(f"mask.strategy must be one of {STRATEGIES}")

    @property
    def mixture_weights(self) -> Tuple[float, float, float, float]:
        return (self.w_random, self.w_block, self.w_key, self.w_lastn)


class MaskedTrajectory:
    """
    A trajectory split into hidden (masked) and visible points.

    ``visible_indices`` doubles as the index map: visible position j sits at
    original index visible_indices[j].
    """

    __slots__ = ("base", "masked_indices", "visible_indices", "strategy")

    def __init__(self, base: Trajectory, masked_indices: Sequence[int], strategy: str = "random"):
        n = len(base)
        masked = np.unique(np.asarray(masked_indices, dtype=np.int64))
        if len(masked) < 1 or len(masked) >= n:
            raise InvalidTrajectory(f"{base.id}: need 1 <= |masked| < n, got {len(masked)}",
                                    id=base.id)
        if masked[0] < 0 or masked[-1] >= n:
            raise InvalidTrajectory(f"{base.id}: masked index out of range", id=base.id)
        keep = np.ones(n, dtype=bool)
        keep[masked] = False
        self.base = base
        self.masked_indices = masked
        self.visible_indices = np.flatnonzero(keep)
        self.strategy = strategy

    @property
    def n(self) -> int:
        return len(self.base)

    @property
    def index_map(self) -> np.ndarray:
        return self.visible_indices

    @property
    def visible(self) -> Trajectory:
        return self.base.select(self.visible_indices)

    @property
    def hidden(self) -> np.ndarray:
        """(|I|, 3) rows of the masked points."""
        return self.base.data[self.masked_indices]

    def merge(self, hidden_rows: Optional[np.ndarray] = None) -> Trajectory:
        """
        Re-assemble a full trajectory from the visible points and hidden rows.

        Args:
            hidden_rows: Replacement rows for the masked indices; the base
                rows when None, which reproduces the base trajectory

        Returns:
            Trajectory: Full-length trajectory
        """
        rows = np.empty_like(self.base.data)
        rows[self.visible_indices] = self.base.data[self.visible_indices]
        rows[self.masked_indices] = self.hidden if hidden_rows is None else hidden_rows
        return self.base.with_data(rows)

    def __repr__(self) -> str:
        return (f"MaskedTrajectory(id={self.base.id!r}, n={self.n}, "
                f"strategy={self.strategy!r}, masked={len(self.masked_indices)})")


def _check_length(traj: Trajectory) -> int:
    n = len(traj)
    if n < MIN_MASKABLE_POINTS:
        raise TooShort(f"{traj.id}: masking needs at least {MIN_MASKABLE_POINTS} points, got {n}",
                       id=traj.id, n=n)
    return n


def mask_count(n: int, r: float) -> int:
    """Hidden count clamp(round(r * n), 1, n - 2)."""
    return clamp(round_half_up(r * n), 1, n - 2)


def mask_random(traj: Trajectory, r: float, seed: SeedLike) -> MaskedTrajectory:
    """
    Hide mask_count(n, r) points drawn uniformly from indices 1..n-1.

    Raises:
        TooShort: for n < 4
    """
    n = _check_length(traj)
    rng = make_rng(seed)
    chosen = rng.choice(np.arange(1, n), size=mask_count(n, r), replace=False)
    return MaskedTrajectory(traj, chosen, "random")


def mask_block(traj: Trajectory, r: float, seed: SeedLike) -> MaskedTrajectory:
    """
    Hide one run of b = mask_count(n, r) consecutive points.

    The start is uniform on 1..n-b, so the block never covers index 0.

    Raises:
        TooShort: for n < 4
    """
    n = _check_length(traj)
    b = mask_count(n, r)
    start = int(make_rng(seed).integers(1, n - b + 1))
    return MaskedTrajectory(traj, np.arange(start, start + b), "block")


def rdp_key_points(traj: Trajectory, epsilon_m: float) -> np.ndarray:
    """
    Interior points kept by Ramer-Douglas-Peucker simplification.

    Distances are measured in the local metric plane. Within a span the
    lowest index attaining the maximum deviation is chosen; it is kept when
    the deviation strictly exceeds epsilon_m, and both sub-spans are searched.

    Args:
        traj: Trajectory with n >= 3
        epsilon_m: Tolerance in meters

    Returns:
        np.ndarray: Sorted 0-based indices; endpoints never included
    """
    n = len(traj)
    if n < 3:
        return np.zeros(0, dtype=np.int64)
    plane = to_local_plane(traj.lng, traj.lat)
    keys = []
    stack = [(0, n - 1)]
    while stack:
        s, e = stack.pop()
        if e - s < 2:
            continue
        d = line_distances(plane[s + 1:e], plane[s], plane[e])
        k = int(np.argmax(d))
        if d[k] > epsilon_m:
            k += s + 1
            keys.append(k)
            stack.append((k, e))
            stack.append((s, k))
    return np.asarray(sorted(keys), dtype=np.int64)


def mask_key_points(traj: Trajectory, r: float, epsilon_m: float,
                    seed: SeedLike) -> MaskedTrajectory:
    """
    Hide RDP key points, capped at round(r * n).

    Extra key points are subsampled uniformly; with no key point the random
    strategy is used instead.

    Raises:
        TooShort: for n < 4
    """
    n = _check_length(traj)
    rng = make_rng(seed)
    keys = rdp_key_points(traj, epsilon_m)
    if len(keys) == 0:
        masked = mask_random(traj, r, rng)
        logger.debug("%s: no key points, using random masking", traj.id)
        return masked
    cap = mask_count(n, r)
    if len(keys) > cap:
        keys = np.sort(rng.choice(keys, size=cap, replace=False))
    return MaskedTrajectory(traj, keys, "key_points")


def mask_last_n(traj: Trajectory, r: float, count: Optional[int] = None) -> MaskedTrajectory:
    """
    Hide the last N points, N = mask_count(n, r) or an explicit count.

    Args:
        traj: Input trajectory (n >= 4)
        r: Masking ratio
        count: Explicit N (clamped to [1, n - 2]); prediction uses 5

    Raises:
        TooShort: for n < 4
    """
    n = _check_length(traj)
    size = mask_count(n, r) if count is None else clamp(int(count), 1, n - 2)
    return MaskedTrajectory(traj, np.arange(n - size, n), "last_n")


def sample_strategy(spec: MaskSpec, seed: SeedLike) -> str:
    """Categorical draw of a strategy name from the mixture weights."""
    if spec.strategy is not None:
        return spec.strategy
    rng = make_rng(seed)
    return STRATEGIES[int(rng.choice(len(STRATEGIES), p=np.asarray(spec.mixture_weights)))]


def apply_strategy(traj: Trajectory, strategy: str, spec: MaskSpec,
                   seed: SeedLike) -> MaskedTrajectory:
    """Run one named strategy with the ratio and tolerance of spec."""
    rng = make_rng(seed)
    runners: Dict[str, Callable[[], MaskedTrajectory]] = {
        "random": lambda: mask_random(traj, spec.mask_ratio, rng),
        "block": lambda: mask_block(traj, spec.mask_ratio, rng),
        "key_points": lambda: mask_key_points(traj, spec.mask_ratio, spec.rdp_epsilon_m, rng),
        "last_n": lambda: mask_last_n(traj, spec.mask_ratio),
    }
    if strategy not in runners:
        raise ConfigError(f"unknown masking strategy {strategy!r}")
    return runners[strategy]()


def mask_trajectory(traj: Trajectory, spec: MaskSpec, seed: SeedLike) -> MaskedTrajectory:
    """Draw a strategy from the mixture, then mask with it (one seeded stream)."""
    rng = make_rng(seed)
    return apply_strategy(traj, sample_strategy(spec, rng), spec, rng)
