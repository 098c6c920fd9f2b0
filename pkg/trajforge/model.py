"""
Masked-reconstruction encoder-decoder for trajectories.

Spatio-temporal tokenization (kernel-size-1 convolution over normalized
coordinates plus a linear map of the time step), Pre-LN transformer blocks
with rotary position embeddings applied at the original point indices, a
learnable mask token placed back at the hidden indices, and a linear output
head producing coordinate offsets relative to the first point.

The encoder and decoder stacks each end with a final LayerNorm
(encoder_norm, decoder_norm), applied before the merge and before the head.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from trajforge.errors import ConfigError, DataIOError, IndexMapMismatch
from trajforge.masking import MaskedTrajectory
from trajforge.trajectory import Trajectory

logger = logging.getLogger(__name__)

ROPE_BASE = 10000.0
CHECKPOINT_FORMAT = "trajforge-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and optimization settings (desk-scale defaults)."""

    d_model: int = field(default=32, metadata={"help": "embedding width (full scale 128)"})
    encoder_blocks: int = field(default=2, metadata={"help": "encoder blocks (full scale 8)"})
    decoder_blocks: int = field(default=2, metadata={"help": "decoder blocks (full scale 4)"})
    heads: int = field(default=2, metadata={"help": "attention heads (full scale 4)"})
    ffn_mult: int = field(default=4, metadata={"help": "FFN expansion factor"})
    pad_len: int = field(default=64, metadata={"help": "sequence padding length (full scale 200)"})
    max_len: int = field(default=512, metadata={"help": "maximum supported length"})
    lr: float = field(default=1e-3, metadata={"help": "initial learning rate"})
    batch_size: int = field(default=32, metadata={"help": "trajectories per step (full scale 1024)"})
    epochs: int = field(default=50, metadata={"help": "maximum epochs (full scale 200)"})
    patience: int = field(default=10, metadata={"help": "early-stopping patience (epochs)"})
    val_fraction: float = field(default=0.1, metadata={"help": "validation share"})
    coord_scale: float = field(default=100.0, metadata={"help": "factor on degree offsets"})
    max_dt_s: float = field(default=60.0, metadata={"help": "temporal input clip (s)"})
    seed: int = field(default=0, metadata={"help": "initialization/training seed"})

    def __post_init__(self):
        for name in ("d_model", "encoder_blocks", "decoder_blocks", "heads", "ffn_mult",
                     "pad_len", "max_len", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if self.d_model % (2 * self.heads):
            raise ConfigError("model.d_model must be divisible by 2 * model.heads")
        if self.pad_len > self.max_len:
            raise ConfigError("model.pad_len must not exceed model.max_len")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("model.val_fraction must be in [0, 1)")
        if self.lr <= 0 or self.coord_scale <= 0 or self.max_dt_s <= 0:
            raise ConfigError("model.lr, model.coord_scale and model.max_dt_s must be positive")

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        """Full-scale settings."""
        values = dict(d_model=128, encoder_blocks=8, decoder_blocks=4, heads=4, pad_len=200,
                      batch_size=1024, epochs=200)
        values.update(overrides)
        return cls(**values)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads


@dataclass
class Batch:
    """Padded tensors for a group of masked trajectories."""

    enc_coords: torch.Tensor   # (B, Le, 2) scaled offsets of visible points
    enc_dt: torch.Tensor       # (B, Le) seconds since previous visible point
    enc_pos: torch.Tensor      # (B, Le) original indices
    enc_valid: torch.Tensor    # (B, Le)
    dec_source: torch.Tensor   # (B, L) encoder slot per position, -1 if hidden
    dec_valid: torch.Tensor    # (B, L)
    target: torch.Tensor       # (B, L, 2) scaled offsets of every point
    loss_mask: torch.Tensor    # (B, L) hidden positions
    anchors: np.ndarray        # (B, 2) first-point lng/lat
    lengths: List[int]
    ids: List[str]


@dataclass
class EmbeddingSequence:
    vectors: torch.Tensor
    valid: torch.Tensor


def normalized_offsets(traj: Trajectory, coord_scale: float) -> np.ndarray:
    """(lng - lng_1, lat - lat_1) * coord_scale for every point."""
    return (traj.data[:, :2] - traj.data[0, :2]) * coord_scale


def _visible_dt(t: np.ndarray, max_dt_s: float) -> np.ndarray:
    dt = np.diff(t, prepend=t[0])
    return np.clip(dt, 0.0, max_dt_s)


def collate(samples: Sequence[Union[MaskedTrajectory, Trajectory]], config: ModelConfig,
            dtype: torch.dtype = torch.float32) -> Batch:
    """
    Pad a list of masked trajectories into a Batch.

    Plain trajectories are accepted too and treated as fully visible (no loss
    positions), which is how the classification adapter feeds the encoder.

    Raises:
        IndexMapMismatch: when a trajectory exceeds model.max_len
    """
    lengths = [len(s.base) if isinstance(s, MaskedTrajectory) else len(s) for s in samples]
    if max(lengths) > config.max_len:
        raise IndexMapMismatch(f"sequence of {max(lengths)} points exceeds max_len {config.max_len}")
    visible = [s.visible_indices if isinstance(s, MaskedTrajectory) else np.arange(len(s))
               for s in samples]
    size, width, depth = len(samples), max(lengths), max(len(v) for v in visible)

    enc_coords = np.zeros((size, depth, 2))
    enc_dt = np.zeros((size, depth))
    enc_pos = np.zeros((size, depth), dtype=np.int64)
    enc_valid = np.zeros((size, depth), dtype=bool)
    dec_source = np.full((size, width), -1, dtype=np.int64)
    dec_valid = np.zeros((size, width), dtype=bool)
    target = np.zeros((size, width, 2))
    loss_mask = np.zeros((size, width), dtype=bool)
    anchors = np.zeros((size, 2))

    for b, (sample, vis, n) in enumerate(zip(samples, visible, lengths)):
        base = sample.base if isinstance(sample, MaskedTrajectory) else sample
        offsets = normalized_offsets(base, config.coord_scale)
        m = len(vis)
        enc_coords[b, :m] = offsets[vis]
        enc_dt[b, :m] = _visible_dt(base.t[vis], config.max_dt_s)
        enc_pos[b, :m] = vis
        enc_valid[b, :m] = True
        dec_source[b, vis] = np.arange(m)
        dec_valid[b, :n] = True
        target[b, :n] = offsets
        if isinstance(sample, MaskedTrajectory):
            loss_mask[b, sample.masked_indices] = True
        anchors[b] = base.data[0, :2]

    return Batch(
        enc_coords=torch.as_tensor(enc_coords, dtype=dtype),
        enc_dt=torch.as_tensor(enc_dt, dtype=dtype),
        enc_pos=torch.as_tensor(enc_pos),
        enc_valid=torch.as_tensor(enc_valid),
        dec_source=torch.as_tensor(dec_source),
        dec_valid=torch.as_tensor(dec_valid),
        target=torch.as_tensor(target, dtype=dtype),
        loss_mask=torch.as_tensor(loss_mask),
        anchors=anchors,
        lengths=lengths,
        ids=[(s.base if isinstance(s, MaskedTrajectory) else s).id for s in samples],
    )


def rope_angles(positions: torch.Tensor, dim: int, dtype: torch.dtype) -> torch.Tensor:
    """Angles i / 10000^(2k/dim) for every position and pair k; shape (..., dim/2)."""
    k = torch.arange(dim // 2, dtype=dtype, device=positions.device)
    inv_freq = ROPE_BASE ** (-2.0 * k / dim)
    return positions.to(dtype).unsqueeze(-1) * inv_freq


def rope_rotate(v: torch.Tensor, positions: Union[int, torch.Tensor]) -> torch.Tensor:
    """
    Rotate dimension pairs (2k, 2k+1) by the rotary angle of each position.

    Args:
        v: (..., dim) tensor, dim even
        positions: Integer index or tensor broadcastable to v.shape[:-1]

    Returns:
        torch.Tensor: Rotated tensor, same shape and norm as v
    """
    positions = torch.as_tensor(positions, device=v.device)
    angles = rope_angles(positions, v.shape[-1], v.dtype)
    cos, sin = torch.cos(angles), torch.sin(angles)
    even, odd = v[..., 0::2], v[..., 1::2]
    return torch.stack((even * cos - odd * sin, even * sin + odd * cos), dim=-1).flatten(-2)


class RotarySelfAttention(nn.Module):
    """Multi-head self-attention with rotary queries and keys."""

    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.query = nn.Linear(d_model, d_model)
        self.key = nn.Linear(d_model, d_model)
        self.value = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        size, length, _ = x.shape
        return x.view(size, length, self.heads, self.head_dim).transpose(1, 2)

    def logits(self, x: torch.Tensor, positions: torch.Tensor,
               valid: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Scaled rotary attention logits, (B, heads, L, L); padded keys get -inf."""
        q = rope_rotate(self._split(self.query(x)), positions.unsqueeze(1))
        k = rope_rotate(self._split(self.key(x)), positions.unsqueeze(1))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if valid is not None:
            scores = scores.masked_fill(~valid[:, None, None, :], float("-inf"))
        return scores

    def forward(self, x: torch.Tensor, positions: torch.Tensor, valid: torch.Tensor,
                return_weights: bool = False):
        weights = torch.softmax(self.logits(x, positions, valid), dim=-1)
        context = weights @ self._split(self.value(x))
        context = context.transpose(1, 2).reshape(x.shape)
        out = self.out(context)
        return (out, weights) if return_weights else out


class TransformerBlock(nn.Module):
    """Pre-LN block: x + Attn(LN(x)), then x + FFN(LN(x)) with GELU."""

    def __init__(self, d_model: int, heads: int, ffn_mult: int):
        super().__init__()
        self.attn_norm = nn.LayerNorm(d_model)
        self.attention = RotarySelfAttention(d_model, heads)
        self.ffn_norm = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, ffn_mult * d_model),
            nn.GELU(),
            nn.Linear(ffn_mult * d_model, d_model),
        )

    def forward(self, x: torch.Tensor, positions: torch.Tensor,
                valid: torch.Tensor) -> torch.Tensor:
        x = x + self.attention(self.attn_norm(x), positions, valid)
        x = x + self.ffn(self.ffn_norm(x))
        return x * valid.unsqueeze(-1).to(x.dtype)


class SpatioTemporalTokenizer(nn.Module):
    """h_i = Conv1d_k1(x_i, y_i) + (W_t * dt_i + b_t)."""

    def __init__(self, d_model: int):
        super().__init__()
        self.spatial = nn.Conv1d(2, d_model, kernel_size=1)
        self.temporal = nn.Linear(1, d_model)

    def forward(self, coords: torch.Tensor, dt: torch.Tensor,
                valid: torch.Tensor) -> torch.Tensor:
        spatial = self.spatial(coords.transpose(1, 2)).transpose(1, 2)
        temporal = self.temporal(dt.unsqueeze(-1))
        return (spatial + temporal) * valid.unsqueeze(-1).to(coords.dtype)


class TrajectoryAutoencoder(nn.Module):
    """Encoder over visible points, decoder over every position."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.tokenizer = SpatioTemporalTokenizer(d)
        self.encoder = nn.ModuleList(
            TransformerBlock(d, config.heads, config.ffn_mult) for _ in range(config.encoder_blocks))
        self.encoder_norm = nn.LayerNorm(d)
        self.mask_token = nn.Parameter(torch.zeros(d))
        self.decoder = nn.ModuleList(
            TransformerBlock(d, config.heads, config.ffn_mult) for _ in range(config.decoder_blocks))
        self.decoder_norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, 2)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases, N(0, 0.02) mask token."""
        for module in self.modules():
            if isinstance(module, (nn.Linear, nn.Conv1d)):
                fan_in = module.weight[0].numel()
                bound = 1.0 / math.sqrt(fan_in)
                nn.init.uniform_(module.weight, -bound, bound)
                nn.init.zeros_(module.bias)
        nn.init.normal_(self.mask_token, std=0.02)

    @property
    def dtype(self) -> torch.dtype:
        return self.mask_token.dtype

    def embed(self, batch: Batch) -> torch.Tensor:
        return self.tokenizer(batch.enc_coords, batch.enc_dt, batch.enc_valid)

    def encode(self, batch: Batch) -> torch.Tensor:
        h = self.embed(batch)
        for block in self.encoder:
            h = block(h, batch.enc_pos, batch.enc_valid)
        return self.encoder_norm(h) * batch.enc_valid.unsqueeze(-1).to(h.dtype)

    def reorder_merge(self, z_enc: torch.Tensor, batch: Batch) -> torch.Tensor:
        """Place encoder outputs at their original indices, mask token elsewhere."""
        visible = batch.dec_source >= 0
        index = batch.dec_source.clamp(min=0).unsqueeze(-1).expand(-1, -1, z_enc.shape[-1])
        placed = z_enc.gather(1, index)
        merged = torch.where(visible.unsqueeze(-1), placed, self.mask_token.expand_as(placed))
        return merged * batch.dec_valid.unsqueeze(-1).to(merged.dtype)

    def decode(self, z_dec: torch.Tensor, batch: Batch) -> torch.Tensor:
        positions = torch.arange(z_dec.shape[1], device=z_dec.device).expand(z_dec.shape[0], -1)
        h = z_dec
        for block in self.decoder:
            h = block(h, positions, batch.dec_valid)
        return self.head(self.decoder_norm(h))

    def forward(self, batch: Batch) -> torch.Tensor:
        return self.decode(self.reorder_merge(self.encode(batch), batch), batch)


def build_model(config: ModelConfig, dtype: torch.dtype = torch.float32) -> TrajectoryAutoencoder:
    """Seeded, deterministic initialization."""
    torch.manual_seed(config.seed)
    return TrajectoryAutoencoder(config).to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def masked_loss(pred: torch.Tensor, target: torch.Tensor, loss_mask: torch.Tensor) -> torch.Tensor:
    """
    Mean squared reconstruction error over hidden positions.

    Each trajectory contributes (1/|I|) * sum_{i in I} ||pred_i - target_i||^2;
    the batch loss is the mean over trajectories.
    """
    weights = loss_mask.to(pred.dtype)
    squared = ((pred - target) ** 2).sum(-1) * weights
    per_traj = squared.sum(-1) / weights.sum(-1).clamp(min=1.0)
    return per_traj.mean()


def gradients(model: nn.Module, batch: Batch) -> Dict[str, torch.Tensor]:
    """Exact gradients of the masked loss for every parameter (zeros if unused)."""
    model.zero_grad(set_to_none=True)
    loss = masked_loss(model(batch), batch.target, batch.loss_mask)
    loss.backward()
    grads = {}
    for name, param in model.named_parameters():
        grads[name] = (param.grad.detach().clone() if param.grad is not None
                       else torch.zeros_like(param))
    model.zero_grad(set_to_none=True)
    return grads


# Single-trajectory helpers


def tokenize(visible: Trajectory, model: TrajectoryAutoencoder) -> EmbeddingSequence:
    """Embeddings of a visible point sequence (anchor = its first point)."""
    batch = collate([visible], model.config, dtype=model.dtype)
    return EmbeddingSequence(model.embed(batch)[0], batch.enc_valid[0])


def attention_block(h: EmbeddingSequence, positions: Sequence[int],
                    block: TransformerBlock) -> EmbeddingSequence:
    """One Pre-LN block over a single sequence at its original point indices."""
    pos = torch.as_tensor(np.asarray(positions, dtype=np.int64)).unsqueeze(0)
    out = block(h.vectors.unsqueeze(0), pos, h.valid.unsqueeze(0))[0]
    return EmbeddingSequence(out, h.valid)


def encode(masked: MaskedTrajectory, model: TrajectoryAutoencoder) -> torch.Tensor:
    """Encoder output for the visible points, shape (m, d)."""
    return model.encode(collate([masked], model.config, dtype=model.dtype))[0]


def reorder_merge(z_enc: torch.Tensor, masked: MaskedTrajectory,
                  model: TrajectoryAutoencoder) -> torch.Tensor:
    """
    Full-length decoder input for one trajectory, shape (n, d).

    Raises:
        IndexMapMismatch: when z_enc or the index map do not fit the trajectory
    """
    index_map = masked.index_map
    if len(z_enc) != len(index_map):
        raise IndexMapMismatch(f"{len(z_enc)} encoder outputs for {len(index_map)} visible points")
    if len(index_map) and (index_map.min() < 0 or index_map.max() >= masked.n
                           or np.any(np.diff(index_map) <= 0)):
        raise IndexMapMismatch("index map not strictly increasing inside [0, n)")
    batch = collate([masked], model.config, dtype=model.dtype)
    return model.reorder_merge(z_enc.unsqueeze(0), batch)[0]


def decode(z_dec: torch.Tensor, model: TrajectoryAutoencoder) -> torch.Tensor:
    """Predicted scaled offsets for every position, shape (n, 2)."""
    valid = torch.ones(1, z_dec.shape[0], dtype=torch.bool)
    batch = Batch(enc_coords=None, enc_dt=None, enc_pos=None, enc_valid=None, dec_source=None,
                  dec_valid=valid, target=None, loss_mask=None, anchors=None, lengths=[],
                  ids=[])
    return model.decode(z_dec.unsqueeze(0), batch)[0]


def denormalize(offsets: np.ndarray, anchor: Sequence[float], coord_scale: float) -> np.ndarray:
    """Scaled offsets back to (lng, lat) degrees."""
    return np.asarray(offsets, dtype=np.float64) / coord_scale + np.asarray(anchor, dtype=np.float64)


@torch.no_grad()
def reconstruct(model: TrajectoryAutoencoder, samples: Sequence[MaskedTrajectory],
                batch_size: int = 64) -> List[np.ndarray]:
    """
    Predicted (lng, lat) for every position of each masked trajectory.

    Returns:
        List[np.ndarray]: One (n, 2) array per sample
    """
    was_training = model.training
    model.eval()
    out: List[np.ndarray] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        batch = collate(chunk, model.config, dtype=model.dtype)
        pred = model(batch).to(torch.float64).numpy()
        for b, n in enumerate(batch.lengths):
            out.append(denormalize(pred[b, :n], batch.anchors[b], model.config.coord_scale))
    model.train(was_training)
    return out


# Checkpoints


def save_checkpoint(path: Union[str, Path], model: TrajectoryAutoencoder, epoch: int,
                    extra: Optional[Dict[str, Any]] = None) -> None:
    """
    Write a JSON checkpoint: config, seed, epoch and flat parameter arrays.

    Float values survive the round trip exactly.
    """
    parameters = {}
    for name, tensor in model.state_dict().items():
        parameters[name] = {
            "shape": list(tensor.shape),
            "dtype": str(tensor.dtype).replace("torch.", ""),
            "values": tensor.detach().to(torch.float64).flatten().tolist(),
        }
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "seed": model.config.seed,
        "epoch": epoch,
        "parameters": parameters,
    }
    if extra:
        payload.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)


def load_checkpoint(path: Union[str, Path]) -> Tuple[TrajectoryAutoencoder, Dict[str, Any]]:
    """
    Rebuild a model from a JSON checkpoint.

    Returns:
        Tuple[TrajectoryAutoencoder, Dict[str, Any]]: (model, checkpoint payload
        without the parameter arrays)

    Raises:
        DataIOError: when the file is missing or not a checkpoint
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"cannot read checkpoint {path}: {e}", path=str(path)) from e
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataIOError(f"{path} is not a {CHECKPOINT_FORMAT} file", path=str(path))

    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in payload["config"].items() if k in known})
    parameters = payload.pop("parameters")
    state = {}
    for name, entry in parameters.items():
        dtype = getattr(torch, entry["dtype"])
        state[name] = torch.tensor(entry["values"], dtype=torch.float64).to(dtype).reshape(entry["shape"])
    model = TrajectoryAutoencoder(config).to(next(iter(state.values())).dtype)
    model.load_state_dict(state)
    return model, payload
