"""
Utility functions and constants for TrajForge.
"""

import json
import math
import random
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

# Spherical Earth model
EARTH_RADIUS_M = 6_371_000.0

# Coordinate standardization: 6 decimals is ~0.1 m at the equator
COORD_DECIMALS = 6

# WGS84 validity bounds
LNG_RANGE = (-180.0, 180.0)
LAT_RANGE = (-90.0, 90.0)

# Unit conversion
MPS_TO_KMH = 3.6

# Masking strategy names, in mixture-weight order
STRATEGIES = ("random", "block", "key_points", "last_n")

SeedLike = Union[int, Sequence[int], np.random.Generator, None]


def round_half_up(value: float) -> int:
    """
    Round to the nearest integer, ties away from zero for positives.

    Args:
        value: Nonnegative real

    Returns:
        int: Rounded value
    """
    return int(math.floor(value + 0.5))


def clamp(value: int, low: int, high: int) -> int:
    """Clamp an integer into [low, high]."""
    return max(low, min(high, value))


def round_coord(value: float) -> float:
    """Standardize a coordinate to COORD_DECIMALS places."""
    return round(float(value), COORD_DECIMALS)


def make_rng(seed: SeedLike) -> np.random.Generator:
    """
    Build a numpy Generator from a seed, a seed sequence or an existing generator.

    Args:
        seed: Integer, tuple of integers (e.g. (seed, epoch, index)) or Generator

    Returns:
        np.random.Generator: Generator (the same object if one was passed)
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (list, tuple)):
        return np.random.default_rng([int(s) for s in seed])
    return np.random.default_rng(seed)


def seed_everything(seed: int) -> None:
    """
    Seed every random source used by training.

    Args:
        seed: Global seed
    """
    import torch

    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def dump_json(payload: Any, path: Union[str, Path]) -> None:
    """
    Write JSON deterministically (sorted keys, fixed indent).

    Args:
        payload: JSON-serializable object
        path: Destination file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def format_table(rows: Iterable[Tuple[str, Any]], title: Optional[str] = None) -> str:
    """
    Render key/value rows as a fixed-width table.

    Args:
        rows: (label, value) pairs
        title: Optional heading

    Returns:
        str: Table text
    """
    lines: List[str] = []
    if title:
        lines.append(title)
        lines.append("-" * 40)
    for label, value in rows:
        if isinstance(value, float):
            text = f"{value:>14.6f}"
        elif value is None:
            text = f"{'-':>14}"
        else:
            text = f"{value!s:>14}"
        lines.append(f"{label:<24}{text}")
    return "\n".join(lines)
