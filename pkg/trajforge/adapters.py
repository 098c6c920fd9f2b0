"""
Task adapters on top of a pretrained autoencoder.

Recovery and prediction reuse the decoder directly; classification mean-pools
encoder outputs over real positions and feeds a two-layer ReLU adapter.
"""

import copy
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn

from trajforge.errors import ConfigError, EmptyDataset, LengthMismatch
from trajforge.masking import MaskedTrajectory, mask_last_n, mask_random
from trajforge.model import TrajectoryAutoencoder, collate, reconstruct
from trajforge.trajectory import Trajectory
from trajforge.utils import SeedLike, make_rng

logger = logging.getLogger(__name__)

PREDICTION_HORIZON = 5
RECOVERY_RATIO = 0.5


class TaskKind(str, Enum):
    RECOVERY = "recovery"
    PREDICTION = "prediction"
    CLASSIFICATION = "classification"


class ReconstructionAdapter:
    """Recovery (random infill) or prediction (last points) with the pretrained decoder."""

    def __init__(self, model: TrajectoryAutoencoder, task: TaskKind,
                 ratio: float = RECOVERY_RATIO, horizon: int = PREDICTION_HORIZON):
        self.model = model
        self.task = task
        self.ratio = ratio
        self.horizon = horizon

    def mask(self, traj: Trajectory, seed: SeedLike) -> MaskedTrajectory:
        """Inference-time mask of the task."""
        if self.task is TaskKind.PREDICTION:
            return mask_last_n(traj, self.ratio, count=self.horizon)
        return mask_random(traj, self.ratio, seed)

    def predict(self, samples: Sequence[MaskedTrajectory]) -> List[np.ndarray]:
        """(lng, lat) predictions for every position of each sample."""
        return reconstruct(self.model, samples)


class ClassificationAdapter(nn.Module):
    """Mean-pooled encoder features followed by Linear-ReLU-Linear."""

    def __init__(self, backbone: TrajectoryAutoencoder, num_classes: int,
                 hidden: Optional[int] = None, freeze_backbone: bool = True):
        super().__init__()
        if num_classes < 2:
            raise ConfigError("classification needs at least 2 classes")
        d = backbone.config.d_model
        self.backbone = backbone
        self.num_classes = num_classes
        self.freeze_backbone = freeze_backbone
        self.mlp = nn.Sequential(nn.Linear(d, hidden or d), nn.ReLU(),
                                 nn.Linear(hidden or d, num_classes))
        self.mlp.to(backbone.dtype)
        for param in self.backbone.parameters():
            param.requires_grad_(not freeze_backbone)

    def forward(self, trajectories: Sequence[Trajectory]) -> torch.Tensor:
        batch = collate(trajectories, self.backbone.config, dtype=self.backbone.dtype)
        z = self.backbone.encode(batch)
        valid = batch.enc_valid.unsqueeze(-1).to(z.dtype)
        pooled = (z * valid).sum(1) / valid.sum(1).clamp(min=1.0)
        return self.mlp(pooled)

    def trainable_parameters(self) -> List[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]


def adapt_head(model: TrajectoryAutoencoder, task: Union[TaskKind, str],
               num_classes: Optional[int] = None, freeze_backbone: bool = True):
    """
    Attach a task adapter to a pretrained model.

    The classification adapter works on a deep copy of the backbone so the
    pretrained model stays untouched in fine-tune mode.

    Args:
        model: Pretrained autoencoder
        task: recovery, prediction or classification
        num_classes: Number of logits (classification only)
        freeze_backbone: Train only the adapter (zero-shot style) when True

    Returns:
        ReconstructionAdapter or ClassificationAdapter
    """
    task = TaskKind(task)
    if task is TaskKind.CLASSIFICATION:
        if num_classes is None:
            raise ConfigError("classification adapter needs num_classes")
        return ClassificationAdapter(copy.deepcopy(model), num_classes,
                                     freeze_backbone=freeze_backbone)
    return ReconstructionAdapter(model, task)


@dataclass
class ClassifierHistory:
    losses: List[float]


def train_classifier(adapter: ClassificationAdapter, trajectories: Sequence[Trajectory],
                     labels: Sequence[int], epochs: int = 20, lr: float = 1e-3,
                     batch_size: int = 32, seed: int = 0,
                     progress_callback=None) -> ClassifierHistory:
    """
    Fit a classification adapter with cross-entropy and Adam.

    Raises:
        LengthMismatch: when labels and trajectories differ in length
        EmptyDataset: when there is nothing to train on
    """
    if len(trajectories) != len(labels):
        raise LengthMismatch(f"{len(trajectories)} trajectories vs {len(labels)} labels")
    if not trajectories:
        raise EmptyDataset("no labelled trajectories")
    torch.manual_seed(seed)
    targets = torch.as_tensor(np.asarray(labels, dtype=np.int64))
    optimizer = torch.optim.Adam(adapter.trainable_parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    losses = []
    adapter.train()
    for epoch in range(epochs):
        order = make_rng((seed, epoch)).permutation(len(trajectories))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            logits = adapter([trajectories[i] for i in idx])
            loss = loss_fn(logits, targets[idx])
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += float(loss) * len(idx)
        losses.append(total / len(order))
        logger.debug("Classifier epoch %d loss %.6g", epoch + 1, losses[-1])
        if progress_callback:
            progress_callback(epoch + 1, epochs)
    adapter.eval()
    return ClassifierHistory(losses)


@torch.no_grad()
def predict_labels(adapter: ClassificationAdapter, trajectories: Sequence[Trajectory],
                   batch_size: int = 64) -> List[int]:
    adapter.eval()
    out: List[int] = []
    for start in range(0, len(trajectories), batch_size):
        logits = adapter(trajectories[start:start + batch_size])
        out.extend(int(v) for v in logits.argmax(-1))
    return out
