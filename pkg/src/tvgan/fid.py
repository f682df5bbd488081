"""Frechet distance between Gaussian feature summaries, with image embedders.

The distance between N(mu_a, Ca) and N(mu_b, Cb) is

    ||mu_a - mu_b||^2 + Tr(Ca + Cb - 2 (Ca Cb)^(1/2))

with the trace of the matrix square root evaluated through the symmetrized
product Ca^(1/2) Cb Ca^(1/2): equal in trace to (Ca Cb)^(1/2), but real
symmetric PSD, so a plain eigendecomposition with eigenvalue clamping is
unconditionally stable.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
import torch

from .config import derive_seed

SYMMETRY_TOL = 1e-8

STATS_MAGIC = b"TVFS"
STATS_VERSION = 1


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector, symmetrized covariance, and sample count of a feature set."""

    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(features) -> GaussianStats:
    """Fit (mean, covariance) to a (count x d) feature matrix.

    Covariance is the unbiased estimator (divisor count - 1), stored
    symmetrized.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"features must be a (count, d) matrix, got {f.shape}")
    n = f.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples to fit a covariance, got {n}")
    mean = f.mean(axis=0)
    centered = f - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, covariance=cov, sample_count=n)


def _check_symmetric(cov: np.ndarray, name: str) -> None:
    scale = max(1.0, float(np.abs(cov).max()))
    worst = float(np.abs(cov - cov.T).max())
    if worst > SYMMETRY_TOL * scale:
        raise ValueError(
            f"{name} covariance is asymmetric beyond tolerance ({worst:.3e})")


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared Frechet (Wasserstein-2) distance between two Gaussians."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    _check_symmetric(a.covariance, "first")
    _check_symmetric(b.covariance, "second")
    root_a = _psd_sqrt(a.covariance)
    inner = root_a @ b.covariance @ root_a
    inner = (inner + inner.T) / 2.0
    cross = np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None)).sum()
    diff = a.mean - b.mean
    value = (float(diff @ diff) + float(np.trace(a.covariance))
             + float(np.trace(b.covariance)) - 2.0 * float(cross))
    return max(value, 0.0)


class PoolEmbedder:
    """Downsample-and-flatten embedder: block-mean pool to pool_hw x pool_hw."""

    def __init__(self, pool_hw: int = 8):
        self.pool_hw = pool_hw
        self.dim = pool_hw * pool_hw

    @property
    def name(self) -> str:
        return f"pool-{self.pool_hw}x{self.pool_hw}"

    def embed(self, batch) -> np.ndarray:
        a = np.asarray(batch, dtype=np.float64)
        if a.ndim != 4 or a.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W) images, got {a.shape}")
        n, _, h, w = a.shape
        p = self.pool_hw
        if h % p or w % p:
            raise ValueError(f"image size {h}x{w} not divisible by pool {p}")
        pooled = a.reshape(n, p, h // p, p, w // p).mean(axis=(2, 4))
        return pooled.reshape(n, self.dim)


class RandomConvEmbedder:
    """Frozen random 3-stage convolutional features, globally average pooled.

    Not trained and never updated: the fixed seed makes it a deterministic
    measurement device. Feature dimension is the final channel count.
    """

    def __init__(self, dim: int = 64, seed: int = 0, chunk_size: int = 256):
        self.dim = dim
        self.seed = seed
        self.chunk_size = chunk_size
        widths = [max(dim // 4, 4), max(dim // 2, 8), dim]
        gen = torch.Generator().manual_seed(derive_seed(seed, "embedder"))
        layers = []
        prev = 1
        for width in widths:
            conv = torch.nn.Conv2d(prev, width, kernel_size=3, stride=2,
                                   padding=1)
            fan_in = prev * 9
            with torch.no_grad():
                conv.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                conv.bias.zero_()
            layers += [conv, torch.nn.LeakyReLU(0.2)]
            prev = width
        self._net = torch.nn.Sequential(*layers)
        self._net.eval()
        for p in self._net.parameters():
            p.requires_grad_(False)

    @property
    def name(self) -> str:
        return f"random-conv-{self.dim}-seed{self.seed}"

    def embed(self, batch) -> np.ndarray:
        x = torch.as_tensor(np.asarray(batch), dtype=torch.float32)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W) images, got {tuple(x.shape)}")
        out = np.empty((x.shape[0], self.dim), dtype=np.float64)
        with torch.no_grad():
            for start in range(0, x.shape[0], self.chunk_size):
                stop = min(start + self.chunk_size, x.shape[0])
                # One sample per conv call: batched convolutions pick
                # batch-size-dependent kernels, which would make features
                # depend on chunk alignment at the last-ulp level.
                for i in range(start, stop):
                    feats = self._net(x[i:i + 1]).mean(dim=(2, 3))
                    out[i] = feats.double().numpy()[0]
        return out


def fid(real, generated, embedder) -> float:
    """Frechet distance between embedded real and generated image batches."""
    real_feats = embedder.embed(real)
    gen_feats = embedder.embed(generated)
    for name, feats in (("real", real_feats), ("generated", gen_feats)):
        if feats.shape[0] < embedder.dim:
            warnings.warn(
                f"{name} sample count {feats.shape[0]} is below feature "
                f"dimension {embedder.dim}; covariance will be singular")
    return frechet_distance(gaussian_stats(real_feats),
                            gaussian_stats(gen_feats))


def save_stats(path, stats: GaussianStats) -> None:
    """Cache stats as a small binary: magic, version, d, count, mean, cov."""
    d = stats.dim
    with open(path, "wb") as fh:
        fh.write(STATS_MAGIC)
        fh.write(struct.pack("<HIQ", STATS_VERSION, d, stats.sample_count))
        fh.write(np.ascontiguousarray(stats.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(stats.covariance, dtype="<f8").tobytes())


def load_stats(path) -> GaussianStats:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != STATS_MAGIC:
        raise ValueError("not a stats cache file (bad magic)")
    version, d, count = struct.unpack_from("<HIQ", blob, 4)
    if version != STATS_VERSION:
        raise ValueError(f"unsupported stats cache version {version}")
    offset = 4 + struct.calcsize("<HIQ")
    mean = np.frombuffer(blob, dtype="<f8", count=d, offset=offset).copy()
    offset += 8 * d
    cov = np.frombuffer(blob, dtype="<f8", count=d * d,
                        offset=offset).reshape(d, d).copy()
    return GaussianStats(mean=mean, covariance=cov, sample_count=count)
