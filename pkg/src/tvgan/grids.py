"""Sample grid assembly and PNG export."""

from __future__ import annotations

import math

import numpy as np
from PIL import Image

from .data import denormalize

GAP = 2
GAP_LEVEL = 128


def grid_shape(count: int) -> tuple[int, int]:
    """(rows, cols) closest to square: 8 -> 2x4, 16 -> 4x4."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rows = max(int(math.isqrt(count)), 1)
    cols = math.ceil(count / rows)
    return rows, cols


def make_grid(batch: np.ndarray) -> np.ndarray:
    """Tile a (N, 1, H, W) batch in [-1, 1] into one uint8 image."""
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1] != 1:
        raise ValueError(f"expected (N, 1, H, W) images, got {batch.shape}")
    n, _, h, w = batch.shape
    rows, cols = grid_shape(n)
    canvas = np.full((rows * h + GAP * (rows + 1),
                      cols * w + GAP * (cols + 1)), GAP_LEVEL, dtype=np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        top = GAP + r * (h + GAP)
        left = GAP + c * (w + GAP)
        canvas[top:top + h, left:left + w] = denormalize(batch[i, 0])
    return canvas


def save_grid(path, batch: np.ndarray) -> None:
    Image.fromarray(make_grid(batch), mode="L").save(path, format="PNG")
