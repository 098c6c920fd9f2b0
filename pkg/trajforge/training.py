"""
Masked-reconstruction pretraining.

Per epoch and trajectory: dynamic resample, interval resample with a drawn
step, tail truncation to pad_len, strategy draw, masking; then forward pass,
masked loss and an Adam step under a cosine learning-rate decay. Every
sample's randomness is keyed by (seed, epoch, index), so preparing batches on
a worker thread gives the same result as preparing them inline.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from trajforge.errors import EmptyDataset, NonFiniteLoss, TooShort
from trajforge.masking import MIN_MASKABLE_POINTS, MaskedTrajectory, MaskSpec, mask_trajectory
from trajforge.model import (ModelConfig, TrajectoryAutoencoder, build_model, collate,
                             masked_loss)
from trajforge.resample import ResamplePolicy, dynamic_resample, interval_resample
from trajforge.trajectory import Trajectory, TrajectoryDataset
from trajforge.utils import make_rng, seed_everything

logger = logging.getLogger(__name__)

# Offset keeping validation masks independent of training epochs
VALIDATION_STREAM = 1_000_003


@dataclass
class EpochRecord:
    """Losses after one epoch; the untrained record at epoch 0 has no train loss."""

    epoch: int
    train_loss: Optional[float]
    val_loss: float


@dataclass
class TrainResult:
    model: TrajectoryAutoencoder
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def initial_val_loss(self) -> float:
        return self.history[0].val_loss

    @property
    def best_val_loss(self) -> float:
        return min(r.val_loss for r in self.history)


def truncate(traj: Trajectory, pad_len: int) -> Trajectory:
    """Drop points beyond pad_len from the tail."""
    if len(traj) <= pad_len:
        return traj
    return traj.select(np.arange(pad_len))


def prepare_sample(traj: Trajectory, config: ModelConfig, policy: ResamplePolicy,
                   spec: MaskSpec, seed: Tuple[int, ...]) -> Optional[MaskedTrajectory]:
    """
    Resample, truncate and mask one trajectory.

    The interval step is drawn from policy.interval_choices; when it would
    leave too few points the step falls back to 1.

    Returns:
        Optional[MaskedTrajectory]: None when the trajectory is too short to mask
    """
    rng = make_rng(seed)
    resampled = dynamic_resample(traj, policy, rng)
    step = int(rng.choice(policy.interval_choices))
    try:
        thinned = interval_resample(resampled, step)
    except TooShort:
        thinned = resampled
    if len(thinned) < MIN_MASKABLE_POINTS:
        thinned = resampled
    thinned = truncate(thinned, config.pad_len)
    if len(thinned) < MIN_MASKABLE_POINTS:
        return None
    return mask_trajectory(thinned, spec, rng)


class Pretrainer:
    """Runs masked-reconstruction pretraining with early stopping."""

    def __init__(self, config: ModelConfig, policy: Optional[ResamplePolicy] = None,
                 spec: Optional[MaskSpec] = None, debug_callback=None,
                 progress_callback: Optional[Callable[[int, int], None]] = None,
                 prefetch: bool = True):
        """
        Initialize the trainer.

        Args:
            config: Model and optimization settings
            policy: Resampling thresholds
            spec: Masking ratio and mixture
            debug_callback: Callback(title, message) for diagnostics
            progress_callback: Callback(current_epoch, total_epochs)
            prefetch: Prepare the next batch on a worker thread
        """
        self.config = config
        self.policy = policy or ResamplePolicy()
        self.spec = spec or MaskSpec()
        self.debug_callback = debug_callback
        self.progress_callback = progress_callback
        self.prefetch = prefetch

    def _debug(self, title: str, message: str) -> None:
        logger.debug("%s: %s", title, message)
        if self.debug_callback:
            self.debug_callback(title, message)

    def _prepare(self, trajectories: Sequence[Trajectory], indices: Sequence[int],
                 epoch: int) -> List[MaskedTrajectory]:
        samples = []
        for i in indices:
            sample = prepare_sample(trajectories[i], self.config, self.policy, self.spec,
                                    (self.config.seed, epoch, int(i)))
            if sample is not None:
                samples.append(sample)
        return samples

    def validation_samples(self, val: Sequence[Trajectory]) -> List[MaskedTrajectory]:
        """Masked validation set, fixed across epochs."""
        return self._prepare(val, range(len(val)), VALIDATION_STREAM)

    @torch.no_grad()
    def evaluate(self, model: TrajectoryAutoencoder, samples: Sequence[MaskedTrajectory]) -> float:
        """Mean masked loss over samples (trajectory-weighted)."""
        model.eval()
        total, count = 0.0, 0
        for start in range(0, len(samples), self.config.batch_size):
            chunk = samples[start:start + self.config.batch_size]
            batch = collate(chunk, self.config, dtype=model.dtype)
            loss = masked_loss(model(batch), batch.target, batch.loss_mask)
            total += float(loss) * len(chunk)
            count += len(chunk)
        model.train()
        return total / max(count, 1)

    def _batches(self, train: Sequence[Trajectory], epoch: int):
        order = make_rng((self.config.seed, epoch)).permutation(len(train))
        size = self.config.batch_size
        chunks = [order[i:i + size] for i in range(0, len(order), size)]
        if not self.prefetch:
            for chunk in chunks:
                yield self._prepare(train, chunk, epoch)
            return
        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(self._prepare, train, chunks[0], epoch) if chunks else None
            for k in range(len(chunks)):
                samples = pending.result()
                if k + 1 < len(chunks):
                    pending = pool.submit(self._prepare, train, chunks[k + 1], epoch)
                yield samples

    def fit(self, dataset: TrajectoryDataset,
            validation: Optional[TrajectoryDataset] = None) -> TrainResult:
        """
        Train a freshly initialized model.

        Args:
            dataset: Preprocessed trajectories
            validation: Held-out set; split from dataset by val_fraction when None

        Returns:
            TrainResult: Model restored to the best validation epoch, loss history
            (epoch 0 is the untrained model)

        Raises:
            EmptyDataset: when there is nothing to train on, or a single
                trajectory and no validation set
            NonFiniteLoss: when a step produces NaN or infinity
        """
        if len(dataset) == 0:
            raise EmptyDataset("no trajectories to train on")
        cfg = self.config
        seed_everything(cfg.seed)
        if validation is None:
            train_ds, validation = dataset.split(cfg.val_fraction, cfg.seed)
        else:
            train_ds = dataset
        train = train_ds.trajectories
        val_samples = self.validation_samples(validation.trajectories)
        if not val_samples:
            raise EmptyDataset("no validation trajectory long enough to mask")

        model = build_model(cfg)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        steps_per_epoch = math.ceil(len(train) / cfg.batch_size)
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=max(1, cfg.epochs * steps_per_epoch))

        result = TrainResult(model=model)
        initial = self.evaluate(model, val_samples)
        result.history.append(EpochRecord(0, None, initial))
        self._debug("Untrained", f"validation loss {initial:.6g}")
        best_val, best_state, stale = initial, _snapshot(model), 0

        for epoch in range(1, cfg.epochs + 1):
            model.train()
            epoch_loss, epoch_count = 0.0, 0
            for step, samples in enumerate(self._batches(train, epoch)):
                if not samples:
                    continue
                batch = collate(samples, cfg, dtype=model.dtype)
                loss = masked_loss(model(batch), batch.target, batch.loss_mask)
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, step {step}",
                                        epoch=epoch, step=step, ids=batch.ids[:10],
                                        lr=scheduler.get_last_lr()[0])
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                scheduler.step()
                epoch_loss += loss.item() * len(samples)
                epoch_count += len(samples)

            val_loss = self.evaluate(model, val_samples)
            train_loss = epoch_loss / max(epoch_count, 1)
            result.history.append(EpochRecord(epoch, train_loss, val_loss))
            self._debug(f"Epoch {epoch}", f"train {train_loss:.6g} val {val_loss:.6g}")
            if self.progress_callback:
                self.progress_callback(epoch, cfg.epochs)

            if val_loss < best_val:
                best_val, best_state, stale = val_loss, _snapshot(model), 0
                result.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info("Early stop at epoch %d (best %d)", epoch, result.best_epoch)
                    break

        model.load_state_dict(best_state)
        model.eval()
        return result


def _snapshot(model: torch.nn.Module) -> Dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train(dataset: TrajectoryDataset, config: ModelConfig,
          policy: Optional[ResamplePolicy] = None,
          spec: Optional[MaskSpec] = None) -> TrainResult:
    """Convenience wrapper around Pretrainer.fit."""
    return Pretrainer(config, policy, spec).fit(dataset)


def write_history_csv(history: Sequence[EpochRecord], path: Union[str, Path]) -> None:
    """Loss history as CSV with columns epoch, train_loss, val_loss (train empty at epoch 0)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for record in history:
            train = "" if record.train_loss is None else repr(record.train_loss)
            writer.writerow([record.epoch, train, repr(record.val_loss)])
