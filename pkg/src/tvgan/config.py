"""Run configuration dataclasses, seed derivation, and config fingerprints."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace


class ConfigurationError(ValueError):
    """Invalid configuration value or unknown config key."""


def derive_seed(*parts) -> int:
    """Mix arbitrary labels/integers into a stable 63-bit seed.

    Stable across processes and platforms (sha256-based, not hash()).
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


@dataclass(frozen=True)
class SynthClassParams:
    """Style parameters for one synthetic palm-line texture class.

    A class seed fixes the class style (line count, anchor rows, background
    texture); per-image variation is jittered on top of it.
    """

    line_count: tuple[int, int] = (3, 5)
    thickness: tuple[float, float] = (2.5, 4.0)
    curvature: tuple[float, float] = (0.0, 0.35)
    background_amplitude: float = 0.08
    foreground_level: float = -0.4
    background_level: float = 0.3
    brightness_jitter: float = 0.15
    contrast_jitter: float = 0.12
    smoothing: float = 0.7
    class_seed: int = 0

    def validate(self) -> None:
        lo, hi = self.line_count
        if lo < 0 or hi < lo:
            raise ConfigurationError(f"bad line_count range {self.line_count}")
        lo, hi = self.thickness
        if lo <= 0 or hi < lo:
            raise ConfigurationError(f"bad thickness range {self.thickness}")
        lo, hi = self.curvature
        if lo < 0 or hi < lo:
            raise ConfigurationError(f"bad curvature range {self.curvature}")
        for name in ("background_amplitude", "brightness_jitter",
                     "contrast_jitter"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0.0 <= self.smoothing <= 1.0:
            raise ConfigurationError("smoothing must lie in [0, 1]")
        for name in ("foreground_level", "background_level"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [-1, 1], got {v}")


@dataclass(frozen=True)
class TrainConfig:
    """Every training hyperparameter, defaults matching the reference protocol."""

    epochs: int = 100
    batch_size: int = 40
    workers: int = 4
    learning_rate: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    latent_dim: int = 100
    lambda_tv: float = 0.03
    image_size: int = 64
    base_channels: int = 64
    seed: int = 0
    checkpoint_every: int = 10
    data_dir: str | None = None
    synthetic: bool = False
    synth_count: int = 2000
    synth: SynthClassParams = field(default_factory=SynthClassParams)

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "latent_dim", "checkpoint_every",
                     "base_channels", "synth_count"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.workers < 0:
            raise ConfigurationError("workers must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {b}")
        if self.lambda_tv < 0:
            raise ConfigurationError("lambda_tv must be >= 0")
        if self.image_size not in (32, 64):
            raise ConfigurationError(
                f"image_size must be 32 or 64, got {self.image_size}")
        if not self.synthetic and self.data_dir is None:
            raise ConfigurationError("either data_dir or synthetic is required")
        self.synth.validate()


# Duration/throughput fields do not define the run identity: a checkpoint must
# stay resumable when only the epoch budget (or loader parallelism) changes.
_FINGERPRINT_EXCLUDED = {"epochs", "checkpoint_every", "workers"}

_PAIR_FIELDS = {"synth_line_count": int, "synth_thickness": float,
                "synth_curvature": float}


def to_flat_dict(config: TrainConfig) -> dict[str, str]:
    """Flatten a TrainConfig to sorted text key/value pairs."""
    out: dict[str, str] = {}
    items = asdict(config)
    synth = items.pop("synth")
    for key, value in items.items():
        out[key] = "" if value is None else str(value)
    for key, value in synth.items():
        name = f"synth_{key}"
        if isinstance(value, tuple):
            out[name] = f"{value[0]},{value[1]}"
        else:
            out[name] = str(value)
    return dict(sorted(out.items()))


def config_fingerprint(config: TrainConfig) -> bytes:
    """32-byte digest of the run-defining config fields."""
    lines = [f"{k}={v}" for k, v in to_flat_dict(config).items()
             if k not in _FINGERPRINT_EXCLUDED]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).digest()


def valid_config_keys() -> list[str]:
    return sorted(to_flat_dict(TrainConfig()))


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_pair(text: str, cast):
    parts = [p.strip() for p in text.strip().strip("()").split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'lo,hi', got {text!r}")
    return (cast(parts[0]), cast(parts[1]))


def make_config(values: dict[str, str],
                base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from flat string key/values over `base`.

    Unknown keys raise ConfigurationError listing the valid key set.
    """
    config = base if base is not None else TrainConfig()
    known = set(valid_config_keys())
    plain_types = {f.name: f.type for f in fields(TrainConfig)
                   if f.name != "synth"}
    top: dict[str, object] = {}
    synth: dict[str, object] = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigurationError(
                f"unknown config key '{key}'; valid keys: "
                + ", ".join(valid_config_keys()))
        try:
            if key in _PAIR_FIELDS:
                synth[key.removeprefix("synth_")] = _parse_pair(
                    raw, _PAIR_FIELDS[key])
            elif key.startswith("synth_") and key not in plain_types:
                name = key.removeprefix("synth_")
                cast = int if name == "class_seed" else float
                synth[name] = cast(raw)
            else:
                kind = plain_types[key]
                if kind == "bool":
                    top[key] = _parse_bool(raw)
                elif kind == "int":
                    top[key] = int(raw)
                elif kind == "float":
                    top[key] = float(raw)
                else:  # str | None
                    top[key] = raw if raw != "" else None
        except ValueError as exc:
            raise ConfigurationError(f"bad value for '{key}': {exc}") from exc
    if synth:
        top["synth"] = replace(config.synth, **synth)
    return replace(config, **top)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; blank lines and '#' comments are ignored."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(
                f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config_file(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return make_config(parse_config_text(fh.read()), base=base)
