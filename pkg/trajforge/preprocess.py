"""
Normalization and filtering pipeline.

Trajectories are first normalized to 1 Hz (first sample per second kept,
short gaps linearly interpolated, long gaps split), passed through an
optional map-matching hook, then checked against the filter rules in fixed
order: length, distance, speed, loop.
"""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from trajforge.errors import ConfigError
from trajforge.geo import haversine_array, path_length_m, step_speeds_kmh
from trajforge.trajectory import Trajectory, TrajectoryDataset
from trajforge.utils import COORD_DECIMALS

logger = logging.getLogger(__name__)

# Rule names in evaluation order, plus the normalization outcome "gap"
FILTER_RULES = ("length", "distance", "speed", "loop")
GAP_RULE = "gap"

MapMatcher = Callable[[Trajectory], Trajectory]


@dataclass(frozen=True)
class FilterPolicy:
    """Thresholds of the filter stage."""

    min_points: int = field(default=32, metadata={"help": "minimum points after 1 Hz normalization"})
    min_distance_m: float = field(default=100.0, metadata={"help": "minimum path length (m)"})
    max_speed_kmh: float = field(default=120.0, metadata={"help": "maximum point-to-point speed"})
    min_speed_kmh: float = field(default=0.5, metadata={"help": "minimum speed outside dwells"})
    dwell_tolerance_s: float = field(default=10.0, metadata={"help": "tolerated low-speed run (s)"})
    loop_endpoint_m: float = field(default=100.0, metadata={"help": "loop: start/end proximity (m)"})
    loop_min_path_m: float = field(default=1000.0, metadata={"help": "loop: minimum path length (m)"})
    max_gap_s: int = field(default=15, metadata={"help": "longest gap interpolated (s)"})

    def __post_init__(self):
        positive = ("min_points", "min_distance_m", "max_speed_kmh", "min_speed_kmh",
                    "loop_endpoint_m", "loop_min_path_m", "max_gap_s")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"filter.{name} must be positive", key=name)
        if self.dwell_tolerance_s < 0:
            raise ConfigError("filter.dwell_tolerance_s must be >= 0", key="dwell_tolerance_s")
        if self.min_speed_kmh >= self.max_speed_kmh:
            raise ConfigError("filter.min_speed_kmh must be below filter.max_speed_kmh")


@dataclass(frozen=True)
class Accept:
    accepted = True
    rule = None


@dataclass(frozen=True)
class Reject:
    rule: str
    accepted = False


FilterDecision = Union[Accept, Reject]


@dataclass
class FilterReport:
    """
    Outcome counts of a pipeline run.

    Conservation: kept + sum(rejected_by_rule) == inputs + splits, where
    ``splits`` counts the extra fragments produced by gap splitting.
    """

    inputs: int = 0
    splits: int = 0
    kept: int = 0
    rejected_by_rule: Dict[str, int] = field(
        default_factory=lambda: {rule: 0 for rule in FILTER_RULES + (GAP_RULE,)})

    @property
    def rejected(self) -> int:
        return sum(self.rejected_by_rule.values())

    @property
    def evaluated(self) -> int:
        return self.inputs + self.splits

    def is_conserved(self) -> bool:
        return self.kept + self.rejected == self.evaluated

    def to_dict(self) -> Dict[str, object]:
        return {
            "inputs": self.inputs,
            "splits": self.splits,
            "kept": self.kept,
            "rejected_by_rule": dict(sorted(self.rejected_by_rule.items())),
        }


def normalize_1hz(traj: Trajectory, max_gap_s: int = 15) -> List[Trajectory]:
    """
    Resample a trajectory onto the integer-second grid.

    The first sample inside each one-second window is kept and snapped to the
    window start. Gaps of at most ``max_gap_s`` seconds are filled by linear
    interpolation; longer gaps split the trajectory. Coordinates are rounded to
    6 decimals.

    Args:
        traj: Input trajectory
        max_gap_s: Longest gap to interpolate

    Returns:
        List[Trajectory]: Fragments with at least two points; a single
        fragment keeps the input id, several are suffixed "/0", "/1", ...
    """
    seconds = np.floor(traj.t)
    _, first = np.unique(seconds, return_index=True)
    grid_t = seconds[first]
    lng = traj.lng[first]
    lat = traj.lat[first]

    cuts = np.flatnonzero(np.diff(grid_t) > max_gap_s) + 1
    pieces = []
    for idx in np.split(np.arange(len(grid_t)), cuts):
        if len(idx) < 2:
            continue
        t_piece = grid_t[idx]
        full_t = np.arange(t_piece[0], t_piece[-1] + 1.0)
        rows = np.column_stack([
            np.round(np.interp(full_t, t_piece, lng[idx]), COORD_DECIMALS),
            np.round(np.interp(full_t, t_piece, lat[idx]), COORD_DECIMALS),
            full_t,
        ])
        pieces.append(rows)

    if len(pieces) == 1:
        return [traj.with_data(pieces[0])]
    return [traj.with_data(rows, traj_id=f"{traj.id}/{k}") for k, rows in enumerate(pieces)]


def _longest_low_speed_run_s(low: np.ndarray, dt: np.ndarray) -> float:
    longest = current = 0.0
    for is_low, step in zip(low, dt):
        current = current + step if is_low else 0.0
        longest = max(longest, current)
    return longest


def apply_filters(traj: Trajectory, policy: FilterPolicy) -> FilterDecision:
    """
    Check a normalized trajectory against the filter rules.

    Rules run in order length, distance, speed, loop and the first failing
    rule is reported. The speed rule rejects any pair above max_speed_kmh and
    any run of pairs below min_speed_kmh lasting longer than
    dwell_tolerance_s.

    Args:
        traj: Trajectory normalized to 1 Hz
        policy: Filter thresholds

    Returns:
        FilterDecision: Accept() or Reject(rule)
    """
    if len(traj) < policy.min_points:
        return Reject("length")

    path_m = path_length_m(traj.lng, traj.lat)
    if path_m < policy.min_distance_m:
        return Reject("distance")

    speeds = step_speeds_kmh(traj.lng, traj.lat, traj.t)
    if np.any(speeds > policy.max_speed_kmh):
        return Reject("speed")
    low = speeds < policy.min_speed_kmh
    if low.any() and _longest_low_speed_run_s(low, np.diff(traj.t)) > policy.dwell_tolerance_s:
        return Reject("speed")

    endpoint_gap = float(haversine_array(traj.lng[0], traj.lat[0], traj.lng[-1], traj.lat[-1]))
    if endpoint_gap < policy.loop_endpoint_m and path_m > policy.loop_min_path_m:
        return Reject("loop")

    return Accept()


def _process_one(traj: Trajectory, policy: FilterPolicy,
                 map_matcher: Optional[MapMatcher]) -> Tuple[List[Trajectory], Counter, int]:
    rejected: Counter = Counter()
    fragments = normalize_1hz(traj, policy.max_gap_s)
    if not fragments:
        rejected[GAP_RULE] += 1
        return [], rejected, 0
    kept = []
    for fragment in fragments:
        if map_matcher is not None:
            fragment = map_matcher(fragment)
        decision = apply_filters(fragment, policy)
        if decision.accepted:
            kept.append(fragment)
        else:
            rejected[decision.rule] += 1
            logger.debug("Rejected %s by %s", fragment.id, decision.rule)
    return kept, rejected, len(fragments) - 1


def run_pipeline(ds: TrajectoryDataset, policy: Optional[FilterPolicy] = None,
                 map_matcher: Optional[MapMatcher] = None,
                 workers: int = 1) -> Tuple[TrajectoryDataset, FilterReport]:
    """
    Normalize and filter every trajectory of a dataset.

    Per-trajectory work runs on a thread pool when workers > 1; the output
    keeps input order, so it does not depend on the worker count.

    Args:
        ds: Input dataset
        policy: Filter thresholds (defaults when None)
        map_matcher: Optional hook applied to each normalized fragment
        workers: Thread count

    Returns:
        Tuple[TrajectoryDataset, FilterReport]: (kept trajectories, report)
    """
    policy = policy or FilterPolicy()
    report = FilterReport(inputs=len(ds))
    kept: List[Trajectory] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = pool.map(lambda tr: _process_one(tr, policy, map_matcher), ds.trajectories)
        for fragments, rejected, splits in results:
            kept.extend(fragments)
            report.splits += splits
            for rule, count in rejected.items():
                report.rejected_by_rule[rule] += count
    report.kept = len(kept)
    logger.info("Pipeline kept %d of %d trajectories", report.kept, report.inputs)
    return TrajectoryDataset(tuple(kept), provenance=ds.provenance), report
