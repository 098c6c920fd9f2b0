"""
Evaluation metrics: MAE/RMSE in meters, accuracy and the grid-density
Jensen-Shannon divergence (natural log, bounded by ln 2).
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import jensenshannon

from trajforge.errors import ContractViolation, EmptyDataset, EmptyEvalSet, LengthMismatch
from trajforge.geo import haversine_array
from trajforge.trajectory import TrajectoryDataset

BBox = Tuple[float, float, float, float]  # (min_lng, min_lat, max_lng, max_lat)
DENSITY_GRID = (16, 16)


@dataclass
class MetricReport:
    """Evaluation outcome; fields a task does not produce stay None."""

    task: str = "recovery"
    n_points: int = 0
    n_trajectories: int = 0
    mae_m: Optional[float] = None
    rmse_m: Optional[float] = None
    accuracy: Optional[float] = None
    density_jsd: Optional[float] = None
    aggregate: str = "point"

    def __post_init__(self):
        if self.mae_m is not None and self.rmse_m is not None:
            tolerance = 1e-9 * max(1.0, self.rmse_m)
            if not self.rmse_m + tolerance >= self.mae_m >= 0.0:
                raise ContractViolation("metric report needs rmse >= mae >= 0",
                                        mae_m=self.mae_m, rmse_m=self.rmse_m)
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ContractViolation("accuracy outside [0, 1]", accuracy=self.accuracy)
        if self.density_jsd is not None and not 0.0 <= self.density_jsd <= math.log(2):
            raise ContractViolation("density divergence outside [0, ln 2]",
                                    density_jsd=self.density_jsd)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def rows(self) -> List[Tuple[str, object]]:
        """(label, value) rows for the fixed-width table."""
        return [(k, v) for k, v in self.to_dict().items() if v is not None]


def point_errors_m(pred: np.ndarray, truth: np.ndarray, eval_indices: Sequence[int]) -> np.ndarray:
    """
    Haversine error at each evaluated index.

    Raises:
        LengthMismatch: when pred and truth differ in length
        EmptyEvalSet: when eval_indices is empty
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape[0] != truth.shape[0]:
        raise LengthMismatch(f"{pred.shape[0]} predictions vs {truth.shape[0]} truths")
    idx = np.asarray(eval_indices, dtype=np.int64)
    if idx.size == 0:
        raise EmptyEvalSet("no positions to evaluate")
    return haversine_array(pred[idx, 0], pred[idx, 1], truth[idx, 0], truth[idx, 1])


def mae_rmse(pred: np.ndarray, truth: np.ndarray,
             eval_indices: Sequence[int]) -> Tuple[float, float]:
    """
    Mean absolute and root-mean-square haversine error.

    Args:
        pred: (n, 2) predicted (lng, lat)
        truth: (n, 2) true (lng, lat)
        eval_indices: Positions to score (the masked ones)

    Returns:
        Tuple[float, float]: (mae_m, rmse_m)
    """
    errors = point_errors_m(pred, truth, eval_indices)
    return float(errors.mean()), float(math.sqrt(np.mean(errors ** 2)))


def aggregate_errors(per_trajectory: Sequence[np.ndarray], mode: str = "point") -> Tuple[float, float, int]:
    """
    Combine per-trajectory error arrays.

    ``point`` averages over all points; ``trajectory`` averages each
    trajectory's MAE and RMSE with equal weight.

    Returns:
        Tuple[float, float, int]: (mae_m, rmse_m, n_points)
    """
    arrays = [np.asarray(e, dtype=np.float64) for e in per_trajectory if len(e)]
    if not arrays:
        raise EmptyEvalSet("no evaluated points")
    n_points = int(sum(len(e) for e in arrays))
    if mode == "point":
        errors = np.concatenate(arrays)
        return float(errors.mean()), float(math.sqrt(np.mean(errors ** 2))), n_points
    if mode == "trajectory":
        maes = [e.mean() for e in arrays]
        rmses = [math.sqrt(np.mean(e ** 2)) for e in arrays]
        return float(np.mean(maes)), float(np.mean(rmses)), n_points
    raise ValueError(f"unknown aggregate mode {mode!r}")


def accuracy(pred_labels: Sequence, true_labels: Sequence) -> float:
    """
    Share of exact label matches.

    Raises:
        LengthMismatch: when the sequences differ in length or are empty
    """
    if len(pred_labels) != len(true_labels) or len(true_labels) == 0:
        raise LengthMismatch(f"{len(pred_labels)} predictions vs {len(true_labels)} labels")
    return float(np.mean([p == t for p, t in zip(pred_labels, true_labels)]))


def dataset_bbox(*datasets: TrajectoryDataset) -> BBox:
    """Smallest box covering every point of the datasets."""
    points = np.concatenate([ds.all_points() for ds in datasets])
    if len(points) == 0:
        raise EmptyDataset("no points to bound")
    return (float(points[:, 0].min()), float(points[:, 1].min()),
            float(points[:, 0].max()), float(points[:, 1].max()))


def grid_histogram(ds: TrajectoryDataset, bbox: BBox, grid: Tuple[int, int] = DENSITY_GRID) -> np.ndarray:
    """
    Point counts on a grid over bbox (rows = longitude cells).

    Points on the max edge land in the last cell; points outside bbox are
    clipped to the border cells.
    """
    points = ds.all_points()
    min_lng, min_lat, max_lng, max_lat = bbox
    edges_lng = np.linspace(min_lng, max_lng if max_lng > min_lng else min_lng + 1e-9, grid[0] + 1)
    edges_lat = np.linspace(min_lat, max_lat if max_lat > min_lat else min_lat + 1e-9, grid[1] + 1)
    lng = np.clip(points[:, 0], edges_lng[0], edges_lng[-1])
    lat = np.clip(points[:, 1], edges_lat[0], edges_lat[-1])
    counts, _, _ = np.histogram2d(lng, lat, bins=(edges_lng, edges_lat))
    return counts


def density_jsd(gen: TrajectoryDataset, ref: TrajectoryDataset, bbox: Optional[BBox] = None,
                grid: Tuple[int, int] = DENSITY_GRID) -> float:
    """
    Jensen-Shannon divergence between grid densities of two datasets.

    Args:
        gen: Generated (or evaluated) trajectories
        ref: Reference trajectories
        bbox: Grid extent; the union bounding box when None
        grid: Cells along longitude and latitude

    Returns:
        float: Divergence in nats, within [0, ln 2]

    Raises:
        EmptyDataset: when either dataset has no points
    """
    if gen.n_points == 0 or ref.n_points == 0:
        raise EmptyDataset("density comparison needs points in both datasets")
    bbox = bbox or dataset_bbox(gen, ref)
    p = grid_histogram(gen, bbox, grid).ravel()
    q = grid_histogram(ref, bbox, grid).ravel()
    # scipy returns the distance (square root of the divergence)
    distance = float(jensenshannon(p / p.sum(), q / q.sum()))
    return min(max(distance ** 2, 0.0), math.log(2))
