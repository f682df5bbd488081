"""Versioned binary checkpoint container.

Layout (little-endian throughout):

    magic   4 bytes  "TVGN"
    version u16      currently 1
    digest  32 bytes config fingerprint
    count   u32      number of tensors
    then, per tensor, sorted by name:
        name_len u16, name utf-8 bytes,
        ndim u8, ndim x u32 dims,
        float32 data

All values (parameters, optimizer moments, step counters, metadata ints) are
stored as float32 tensors; integer-valued entries round-trip exactly within
float32 range. Files are written atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TVGN"
FORMAT_VERSION = 1

_META_INTS = ("epoch", "latent_dim", "image_size", "base_channels")


class CheckpointError(ValueError):
    """Unreadable checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an unsupported format version."""


class CheckpointFingerprintError(CheckpointError):
    """Checkpoint belongs to a different training configuration."""


@dataclass
class Checkpoint:
    """Full training state: both networks, both optimizers, epoch, identity."""

    gen_state: dict[str, np.ndarray]
    disc_state: dict[str, np.ndarray]
    gen_opt_state: dict[str, np.ndarray]
    disc_opt_state: dict[str, np.ndarray]
    epoch: int
    latent_dim: int
    image_size: int
    base_channels: int
    config_fingerprint: bytes


def _flatten(checkpoint: Checkpoint) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for name in _META_INTS:
        tensors[f"meta/{name}"] = np.asarray(
            [getattr(checkpoint, name)], dtype=np.float32)
    groups = (("gen", checkpoint.gen_state),
              ("disc", checkpoint.disc_state),
              ("optg", checkpoint.gen_opt_state),
              ("optd", checkpoint.disc_opt_state))
    for prefix, state in groups:
        for key, value in state.items():
            tensors[f"{prefix}/{key}"] = np.asarray(value, dtype=np.float32)
    return tensors


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    """Serialize to `path`; deterministic byte layout for identical state."""
    if len(checkpoint.config_fingerprint) != 32:
        raise ValueError("config fingerprint must be 32 bytes")
    tensors = _flatten(checkpoint)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(checkpoint.config_fingerprint)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.blob):
            raise CheckpointError("truncated checkpoint file")
        chunk = self.blob[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_fingerprint: bytes | None = None,
                    allow_mismatch: bool = False) -> Checkpoint:
    """Parse a checkpoint file; optionally enforce a config fingerprint."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} unsupported "
            f"(expected {FORMAT_VERSION})")
    fingerprint = reader.take(32)
    if (expected_fingerprint is not None
            and fingerprint != expected_fingerprint and not allow_mismatch):
        raise CheckpointFingerprintError(
            f"{path}: checkpoint was trained under a different config "
            "(pass allow_mismatch=True to override)")
    (count,) = reader.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(reader.take(4 * size), dtype="<f4")
        tensors[name] = data.reshape(shape).copy()
    if reader.offset != len(reader.blob):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")

    groups: dict[str, dict[str, np.ndarray]] = {
        "gen": {}, "disc": {}, "optg": {}, "optd": {}, "meta": {}}
    for name, arr in tensors.items():
        prefix, _, key = name.partition("/")
        if prefix not in groups or not key:
            raise CheckpointError(f"{path}: unexpected tensor name {name!r}")
        groups[prefix][key] = arr
    meta = groups["meta"]
    missing = [k for k in _META_INTS if k not in meta]
    if missing:
        raise CheckpointError(f"{path}: missing metadata {missing}")
    return Checkpoint(
        gen_state=groups["gen"],
        disc_state=groups["disc"],
        gen_opt_state=groups["optg"],
        disc_opt_state=groups["optd"],
        epoch=int(meta["epoch"][0]),
        latent_dim=int(meta["latent_dim"][0]),
        image_size=int(meta["image_size"][0]),
        base_channels=int(meta["base_channels"][0]),
        config_fingerprint=fingerprint,
    )
