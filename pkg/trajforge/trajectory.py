"""
Trajectory value types.

A Trajectory stores its points as an (n, 3) float64 array of
(lng, lat, t) rows; ``points`` materializes TrajPoint objects on demand.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from trajforge.errors import EmptyDataset, InvalidTrajectory
from trajforge.geo import GeoPoint
from trajforge.utils import LAT_RANGE, LNG_RANGE


@dataclass(frozen=True, slots=True)
class TrajPoint:
    """A timestamped position; t is seconds since the Unix epoch."""

    pos: GeoPoint
    t: float

    @property
    def lng(self) -> float:
        return self.pos.lng

    @property
    def lat(self) -> float:
        return self.pos.lat

    @classmethod
    def of(cls, lng: float, lat: float, t: float) -> "TrajPoint":
        return cls(GeoPoint(float(lng), float(lat)), float(t))


class Trajectory:
    """
    Ordered, strictly time-increasing sequence of at least two points.

    Instances are treated as immutable: the backing array is made read-only.
    """

    __slots__ = ("id", "data", "meta")

    def __init__(self, traj_id: str, data, meta: Optional[Mapping[str, Any]] = None):
        """
        Initialize and validate a trajectory.

        Args:
            traj_id: Opaque identifier
            data: (n, 3) array-like of (lng, lat, t)
            meta: Optional key-value tags

        Raises:
            InvalidTrajectory: when the invariants do not hold
        """
        array = np.array(data, dtype=np.float64, copy=True)
        if array.ndim != 2 or array.shape[1] != 3:
            raise InvalidTrajectory(f"{traj_id}: expected (n, 3) points, got {array.shape}",
                                    id=traj_id)
        if len(array) < 2:
            raise InvalidTrajectory(f"{traj_id}: needs at least 2 points", id=traj_id)
        if not np.all(np.isfinite(array)):
            raise InvalidTrajectory(f"{traj_id}: non-finite values", id=traj_id)
        lng, lat, t = array[:, 0], array[:, 1], array[:, 2]
        if (lng.min() < LNG_RANGE[0] or lng.max() > LNG_RANGE[1]
                or lat.min() < LAT_RANGE[0] or lat.max() > LAT_RANGE[1]):
            raise InvalidTrajectory(f"{traj_id}: coordinate out of range", id=traj_id)
        if np.any(np.diff(t) <= 0):
            raise InvalidTrajectory(f"{traj_id}: timestamps not strictly increasing",
                                    id=traj_id)
        array.setflags(write=False)
        self.id = str(traj_id)
        self.data = array
        self.meta: Dict[str, Any] = dict(meta or {})

    @classmethod
    def from_points(cls, traj_id: str, points: Iterable[TrajPoint],
                    meta: Optional[Mapping[str, Any]] = None) -> "Trajectory":
        rows = [(p.lng, p.lat, p.t) for p in points]
        return cls(traj_id, np.asarray(rows, dtype=np.float64).reshape(-1, 3), meta)

    @property
    def lng(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def lat(self) -> np.ndarray:
        return self.data[:, 1]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 2]

    @property
    def points(self) -> Tuple[TrajPoint, ...]:
        return tuple(TrajPoint.of(*row) for row in self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, i: int) -> TrajPoint:
        return TrajPoint.of(*self.data[i])

    def select(self, indices: Sequence[int], traj_id: Optional[str] = None) -> "Trajectory":
        """Subsequence at the given (increasing) indices."""
        return Trajectory(traj_id or self.id, self.data[np.asarray(indices, dtype=np.int64)],
                          self.meta)

    def with_data(self, data, traj_id: Optional[str] = None) -> "Trajectory":
        return Trajectory(traj_id or self.id, data, self.meta)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.id == other.id and self.meta == other.meta
                and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))

    def __hash__(self):
        return hash((self.id, len(self.data)))

    def __repr__(self) -> str:
        return f"Trajectory(id={self.id!r}, n={len(self)})"


@dataclass(frozen=True)
class TrajectoryDataset:
    """A collection of trajectories with unique ids."""

    trajectories: Tuple[Trajectory, ...] = ()
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        seen = set()
        for traj in self.trajectories:
            if traj.id in seen:
                raise InvalidTrajectory(f"duplicate trajectory id {traj.id!r}", id=traj.id)
            seen.add(traj.id)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, i: int) -> Trajectory:
        return self.trajectories[i]

    @property
    def n_points(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def all_points(self) -> np.ndarray:
        """Every (lng, lat, t) row of every trajectory stacked, (N, 3)."""
        if not self.trajectories:
            return np.zeros((0, 3))
        return np.concatenate([t.data for t in self.trajectories])

    def split(self, fraction: float, seed: int) -> Tuple["TrajectoryDataset", "TrajectoryDataset"]:
        """
        Seeded split into (rest, held_out) with round(fraction * len) held out.

        Both halves are non-empty.

        Raises:
            EmptyDataset: when there are fewer than 2 trajectories
        """
        n = len(self.trajectories)
        if n < 2:
            raise EmptyDataset(f"cannot split {n} trajectories into two non-empty parts", n=n)
        n_out = min(n - 1, max(1, int(round(fraction * n))))
        order = np.random.default_rng(seed).permutation(n)
        held = sorted(order[:n_out].tolist())
        rest = sorted(order[n_out:].tolist())
        pick = lambda idx: TrajectoryDataset(tuple(self.trajectories[i] for i in idx),
                                             self.provenance)
        return pick(rest), pick(held)

    def ids(self) -> List[str]:
        return [t.id for t in self.trajectories]
