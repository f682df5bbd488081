"""Anisotropic total variation: exact values, subgradients, batch reductions.

TV of an image is the sum of absolute first differences between horizontally
and vertically adjacent pixels, over in-bounds pairs only (no wraparound, no
padding). Multi-channel inputs are summed per channel independently.

Functions accept numpy arrays (computed in float64) or torch tensors (kept in
the tensor's dtype and autograd graph, for use inside training losses).
"""

from __future__ import annotations

import numpy as np
import torch

REDUCTIONS = ("mean", "sum")


def _check_shape(shape, what: str = "image") -> None:
    if len(shape) < 2:
        raise ValueError(f"{what} must have at least 2 dimensions, got {shape}")
    h, w = shape[-2], shape[-1]
    if h < 1 or w < 1:
        raise ValueError(f"{what} must be non-empty, got H={h}, W={w}")


def tv_value(image) -> float:
    """Total variation of a single image (rank 2, or rank 3 with channels).

    Returns a python float for array input, a scalar tensor for torch input.
    """
    if isinstance(image, torch.Tensor):
        _check_shape(image.shape)
        dh = image[..., :, 1:] - image[..., :, :-1]
        dv = image[..., 1:, :] - image[..., :-1, :]
        return dh.abs().sum() + dv.abs().sum()
    a = np.asarray(image, dtype=np.float64)
    _check_shape(a.shape)
    return float(np.abs(np.diff(a, axis=-1)).sum()
                 + np.abs(np.diff(a, axis=-2)).sum())


def tv_subgradient(image) -> np.ndarray:
    """A subgradient of tv_value at `image`, same shape as the input.

    Each |d| term contributes sign(d) to its two pixels, with sign(0) = 0,
    so the result is the zero element of the subdifferential at kinks.
    """
    a = np.asarray(image, dtype=np.float64)
    _check_shape(a.shape)
    grad = np.zeros_like(a)
    sh = np.sign(np.diff(a, axis=-1))
    grad[..., :, 1:] += sh
    grad[..., :, :-1] -= sh
    sv = np.sign(np.diff(a, axis=-2))
    grad[..., 1:, :] += sv
    grad[..., :-1, :] -= sv
    return grad


def batch_tv(batch, reduction: str = "mean"):
    """Per-image TV over a batch (count x ... x H x W), reduced by mean or sum.

    The mean reduction keeps the effective regularization strength independent
    of batch size. Torch input stays differentiable.
    """
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    if isinstance(batch, torch.Tensor):
        _check_shape(batch.shape[1:], what="batch image")
        if batch.shape[0] < 1:
            raise ValueError("batch must contain at least one image")
        dh = (batch[..., :, 1:] - batch[..., :, :-1]).abs()
        dv = (batch[..., 1:, :] - batch[..., :-1, :]).abs()
        per_image = dh.flatten(1).sum(dim=1) + dv.flatten(1).sum(dim=1)
        return per_image.mean() if reduction == "mean" else per_image.sum()
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim < 3:
        raise ValueError(f"batch must have at least 3 dimensions, got {a.shape}")
    _check_shape(a.shape[1:], what="batch image")
    if a.shape[0] < 1:
        raise ValueError("batch must contain at least one image")
    axes = tuple(range(1, a.ndim))
    per_image = (np.abs(np.diff(a, axis=-1)).sum(axis=axes)
                 + np.abs(np.diff(a, axis=-2)).sum(axis=axes))
    return float(per_image.mean() if reduction == "mean" else per_image.sum())
