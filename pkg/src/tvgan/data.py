"""Image ingestion and the synthetic palm-line texture fixture.

All yielded images are single-channel float32 arrays of shape (1, S, S) with
values in [-1, 1]. Directory sources are decoded eagerly; downsampling uses
exact block averaging (integer ratios only).
"""

from __future__ import annotations

import hashlib
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ConfigurationError, SynthClassParams, derive_seed

IMAGE_EXTENSIONS = (".png", ".bmp")
SUPPORTED_SIZES = (32, 64)


class DataError(ValueError):
    """Unusable dataset: empty, too small, or undecodable."""


def normalize(raw) -> np.ndarray:
    """Map [0, 255] gray levels onto [-1, 1] (0 -> -1, 127.5 -> 0, 255 -> 1)."""
    return (np.asarray(raw, dtype=np.float32) / np.float32(127.5)) - np.float32(1.0)


def denormalize(image) -> np.ndarray:
    """Inverse of normalize: back to uint8 gray levels, rounded and clipped."""
    levels = (np.asarray(image, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.rint(levels), 0, 255).astype(np.uint8)


class ArrayDataset:
    """In-memory image source: (N, 1, S, S) float32 in [-1, 1]."""

    def __init__(self, images: np.ndarray):
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4 or images.shape[1] != 1:
            raise DataError(f"expected (N, 1, S, S) images, got {images.shape}")
        if images.shape[0] < 1:
            raise DataError("dataset is empty")
        self.images = images

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_size(self) -> int:
        return self.images.shape[-1]

    def shuffled_indices(self, seed: int) -> np.ndarray:
        """Deterministic epoch permutation for the given seed."""
        return np.random.default_rng(seed).permutation(len(self))

    def fingerprint(self) -> str:
        digest = hashlib.sha256(np.ascontiguousarray(self.images).tobytes())
        return digest.hexdigest()


def _block_mean(array: np.ndarray, target: int) -> np.ndarray:
    h, w = array.shape
    if h == target and w == target:
        return array
    if h % target or w % target:
        raise DataError(
            f"can only downsample by integer ratios: {h}x{w} -> {target}")
    fh, fw = h // target, w // target
    return array.reshape(target, fh, target, fw).mean(axis=(1, 3))


def _decode_grayscale(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)  # plain channel average
    if arr.ndim != 2:
        raise DataError(f"unsupported image layout in {path.name}: {arr.shape}")
    return arr


def load_directory(path, image_size: int, workers: int = 0) -> ArrayDataset:
    """Load every PNG/BMP in `path` as normalized `image_size` grayscale.

    Decoding may fan out over `workers` threads; the sorted file order is
    preserved either way. Undecodable files are skipped with a warning; an
    empty result is an error.
    """
    if image_size not in SUPPORTED_SIZES:
        raise ConfigurationError(f"image_size must be one of {SUPPORTED_SIZES}")
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir()
                   if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise DataError(f"no {'/'.join(IMAGE_EXTENSIONS)} images in {root}")

    def decode(file: Path):
        try:
            return normalize(_block_mean(_decode_grayscale(file), image_size))
        except DataError:
            raise
        except Exception as exc:  # undecodable file
            warnings.warn(f"skipping {file.name}: {exc}")
            return None

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decoded = list(pool.map(decode, files))
    else:
        decoded = [decode(file) for file in files]
    images = [img for img in decoded if img is not None]
    if not images:
        raise DataError(f"no decodable images in {root}")
    return ArrayDataset(np.stack(images)[:, None, :, :])


def _box_mean3(image: np.ndarray) -> np.ndarray:
    """3x3 box mean with edge replication; softens line edges."""
    padded = np.pad(image, 1, mode="edge")
    acc = np.zeros_like(image)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            acc += padded[dy:dy + image.shape[0], dx:dx + image.shape[1]]
    return acc / 9.0


def _disk_offsets(radius: float) -> np.ndarray:
    r = max(int(np.ceil(radius)), 0)
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    keep = dy * dy + dx * dx <= radius * radius
    return np.stack([dy[keep], dx[keep]], axis=1)


def _stamp_curve(size: int, row_frac: float, deflection: float,
                 phase: float, x_lo: float, x_hi: float,
                 thickness: float) -> np.ndarray:
    """Rasterize one smooth curve as a boolean mask.

    Sampled at sub-pixel steps so consecutive stamps overlap, which makes the
    mask a single 8-connected component by construction.
    """
    x0, x1 = x_lo * size, x_hi * size
    steps = int(np.ceil((x1 - x0) * 4)) + 1
    t = np.linspace(0.0, 1.0, steps)
    xs = x0 + (x1 - x0) * t
    ys = row_frac * size + deflection * np.sin(np.pi * t + phase)
    ys = np.clip(ys, 1.0, size - 2.0)
    points = np.stack([np.rint(ys), np.rint(xs)], axis=1).astype(np.int64)
    offsets = _disk_offsets(thickness / 2.0)
    cells = points[:, None, :] + offsets[None, :, :]
    cells = cells.reshape(-1, 2)
    np.clip(cells, 0, size - 1, out=cells)
    mask = np.zeros((size, size), dtype=bool)
    mask[cells[:, 0], cells[:, 1]] = True
    return mask


class _ClassStyle:
    """Per-class attributes drawn once from the class seed."""

    def __init__(self, params: SynthClassParams):
        rng = np.random.default_rng(derive_seed(params.class_seed, "class"))
        # Background drawn first: classes differing only in line params share
        # identical background styles, so line effects are cleanly additive.
        self.bg_freq = rng.uniform(0.8, 2.5, size=2)
        self.bg_phase = rng.uniform(0.0, 2 * np.pi)
        lo, hi = params.line_count
        self.n_lines = int(rng.integers(lo, hi + 1))
        # Stratified anchor rows: one band per line keeps sane configurations
        # non-intersecting, so component counts stay readable.
        self.anchors = []
        for k in range(self.n_lines):
            band_lo = 0.12 + 0.76 * k / max(self.n_lines, 1)
            band_hi = 0.12 + 0.76 * (k + 1) / max(self.n_lines, 1)
            margin = 0.2 * (band_hi - band_lo)
            self.anchors.append(rng.uniform(band_lo + margin, band_hi - margin))
        self.thicknesses = [float(rng.uniform(*params.thickness))
                            for _ in range(self.n_lines)]
        self.deflections = [float(rng.uniform(*params.curvature))
                            * rng.choice([-1.0, 1.0])
                            for _ in range(self.n_lines)]


def line_threshold(params: SynthClassParams) -> float:
    """Gray level separating line pixels from background pixels."""
    return (params.foreground_level + params.background_level) / 2.0


def render_palm_lines(size: int, params: SynthClassParams,
                      image_index: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """One synthetic image plus its per-line boolean masks."""
    style = _ClassStyle(params)
    rng = np.random.default_rng(
        derive_seed(params.class_seed, "image", image_index))
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    wave = np.cos(2 * np.pi * (style.bg_freq[0] * xx + style.bg_freq[1] * yy)
                  + style.bg_phase + rng.uniform(0, 2 * np.pi))
    # Mostly smooth texture with a little bounded grain: the background stays
    # strictly inside level +- amplitude, so thresholding at the fg/bg
    # midpoint recovers the exact line mask.
    grain = rng.uniform(-1.0, 1.0, size=(size, size))
    image = (params.background_level
             + params.background_amplitude * (0.85 * wave + 0.15 * grain))
    masks = []
    amp = params.curvature[1] * size * 0.25
    for k in range(style.n_lines):
        row = style.anchors[k] + rng.uniform(-0.02, 0.02)
        deflection = style.deflections[k] * size * 0.25
        deflection = float(np.clip(deflection + rng.uniform(-0.3, 0.3),
                                   -max(amp, 0.3), max(amp, 0.3)))
        mask = _stamp_curve(
            size, row, deflection,
            phase=rng.uniform(-0.3, 0.3),
            x_lo=rng.uniform(0.0, 0.12), x_hi=rng.uniform(0.88, 1.0),
            thickness=style.thicknesses[k])
        level = params.foreground_level + rng.uniform(-0.06, 0.06)
        image[mask] = level
        masks.append(mask)
    if params.smoothing > 0.0:
        image = ((1.0 - params.smoothing) * image
                 + params.smoothing * _box_mean3(image))
    # Per-image contrast and brightness: easy-to-model diversity axes that
    # keep the fg/bg separation ordering intact.
    contrast = 1.0 + rng.uniform(-params.contrast_jitter,
                                 params.contrast_jitter)
    brightness = rng.uniform(-params.brightness_jitter,
                             params.brightness_jitter)
    image = contrast * image + brightness
    return np.clip(image, -1.0, 1.0).astype(np.float32), masks


def synth_palm_lines(count: int, size: int,
                     params: SynthClassParams) -> np.ndarray:
    """Batch of (count, 1, size, size) line-textured images in [-1, 1].

    Deterministic: image i depends only on (params, i), so a longer batch
    extends a shorter one.
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    if size not in SUPPORTED_SIZES:
        raise ConfigurationError(f"size must be one of {SUPPORTED_SIZES}")
    params.validate()
    batch = np.empty((count, 1, size, size), dtype=np.float32)
    for i in range(count):
        batch[i, 0], _ = render_palm_lines(size, params, i)
    return batch


def synthetic_dataset(count: int, size: int,
                      params: SynthClassParams) -> ArrayDataset:
    return ArrayDataset(synth_palm_lines(count, size, params))
