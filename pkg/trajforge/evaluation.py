"""
Downstream evaluation of a pretrained model.

Held-out trajectories go through the same length-dependent resampling as in
pretraining, are thinned to a fixed interval and cut to the model's padding
length before the task mask is applied. Recovery hides a random half of the
points, prediction the last five; both are scored on the hidden positions
only.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import torch

from trajforge.adapters import (ClassificationAdapter, ReconstructionAdapter, TaskKind,
                                adapt_head, predict_labels, train_classifier)
from trajforge.config import EvalConfig
from trajforge.errors import EmptyEvalSet, TooShort
from trajforge.masking import MIN_MASKABLE_POINTS
from trajforge.metrics import MetricReport, accuracy, aggregate_errors, density_jsd, point_errors_m
from trajforge.model import TrajectoryAutoencoder
from trajforge.resample import ResamplePolicy, dynamic_resample, interval_resample
from trajforge.trajectory import Trajectory, TrajectoryDataset
from trajforge.training import truncate
from trajforge.utils import clamp, make_rng, round_half_up

logger = logging.getLogger(__name__)

# Keeps evaluation masks apart from training and validation draws
EVAL_STREAM = 2_000_003


def prepare_eval_trajectory(traj: Trajectory, policy: ResamplePolicy, interval_dt: int,
                            pad_len: int) -> Optional[Trajectory]:
    """Resample, thin and truncate one held-out trajectory; None if too short."""
    try:
        thinned = interval_resample(dynamic_resample(traj, policy), interval_dt)
    except TooShort:
        return None
    thinned = truncate(thinned, pad_len)
    return thinned if len(thinned) >= MIN_MASKABLE_POINTS else None


def _prepared(dataset: TrajectoryDataset, policy: ResamplePolicy, eval_cfg: EvalConfig,
              pad_len: int) -> List[Trajectory]:
    out = []
    for traj in dataset:
        prepared = prepare_eval_trajectory(traj, policy, eval_cfg.interval_dt, pad_len)
        if prepared is None:
            logger.debug("Skipping %s: too short after resampling", traj.id)
            continue
        out.append(prepared)
    return out


def evaluate_reconstruction(model: TrajectoryAutoencoder, dataset: TrajectoryDataset,
                            task: str, eval_cfg: EvalConfig, policy: ResamplePolicy,
                            seed: int) -> MetricReport:
    """
    Recovery or prediction MAE/RMSE on the hidden positions.

    Raises:
        EmptyEvalSet: when no trajectory survives preparation
    """
    adapter = ReconstructionAdapter(model, TaskKind(task), ratio=eval_cfg.mask_ratio,
                                    horizon=eval_cfg.horizon)
    trajectories = _prepared(dataset, policy, eval_cfg, model.config.pad_len)
    if not trajectories:
        raise EmptyEvalSet("no evaluation trajectory long enough to mask")
    samples = [adapter.mask(traj, (seed, EVAL_STREAM, i)) for i, traj in enumerate(trajectories)]
    predictions = adapter.predict(samples)
    errors = [point_errors_m(pred, sample.base.data[:, :2], sample.masked_indices)
              for pred, sample in zip(predictions, samples)]
    mae, rmse, n_points = aggregate_errors(errors, eval_cfg.aggregate)
    return MetricReport(task=task, n_points=n_points, n_trajectories=len(samples),
                        mae_m=mae, rmse_m=rmse, aggregate=eval_cfg.aggregate)


def labelled_trajectories(trajectories: Sequence[Trajectory],
                          label_key: str) -> Tuple[List[Trajectory], List[int], List[str]]:
    """
    Trajectories carrying meta[label_key], with integer labels.

    Returns:
        Tuple: (trajectories, label indices, sorted class names)
    """
    kept = [t for t in trajectories if label_key in t.meta]
    classes = sorted({str(t.meta[label_key]) for t in kept})
    lookup = {name: k for k, name in enumerate(classes)}
    return kept, [lookup[str(t.meta[label_key])] for t in kept], classes


def evaluate_classification(model: TrajectoryAutoencoder, dataset: TrajectoryDataset,
                            eval_cfg: EvalConfig, policy: ResamplePolicy, seed: int,
                            progress_callback=None) -> MetricReport:
    """
    Train a classification adapter on part of the labelled set and report
    accuracy on the rest.

    Raises:
        EmptyEvalSet: with fewer than two labelled trajectories
    """
    prepared = _prepared(dataset, policy, eval_cfg, model.config.pad_len)
    trajectories, labels, classes = labelled_trajectories(prepared, eval_cfg.label_key)
    n = len(trajectories)
    if n < 2:
        raise EmptyEvalSet(f"need at least 2 trajectories labelled by meta[{eval_cfg.label_key!r}]")
    order = make_rng((seed, EVAL_STREAM)).permutation(n)
    n_train = clamp(round_half_up(eval_cfg.train_fraction * n), 1, n - 1)
    train_idx, test_idx = order[:n_train], order[n_train:]

    torch.manual_seed(seed)
    adapter: ClassificationAdapter = adapt_head(model, TaskKind.CLASSIFICATION,
                                                num_classes=max(2, len(classes)),
                                                freeze_backbone=eval_cfg.freeze_backbone)
    train_classifier(adapter, [trajectories[i] for i in train_idx],
                     [labels[i] for i in train_idx], epochs=eval_cfg.classifier_epochs,
                     lr=model.config.lr, batch_size=model.config.batch_size, seed=seed,
                     progress_callback=progress_callback)
    test = [trajectories[i] for i in test_idx]
    predicted = predict_labels(adapter, test)
    acc = accuracy(predicted, [labels[i] for i in test_idx])
    logger.info("Classification accuracy %.4f over %d trajectories (%d classes)",
                acc, len(test), len(classes))
    return MetricReport(task="classification", n_points=int(sum(len(t) for t in test)),
                        n_trajectories=len(test), accuracy=acc)


def evaluate_density(dataset: TrajectoryDataset, reference: TrajectoryDataset) -> MetricReport:
    """Grid-density divergence of dataset against reference."""
    return MetricReport(task="density", n_points=dataset.n_points,
                        n_trajectories=len(dataset), density_jsd=density_jsd(dataset, reference))
