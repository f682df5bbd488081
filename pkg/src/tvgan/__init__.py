"""Total-variation regularized convolutional GAN for line-textured images,
with an exact anisotropic TV operator and a from-scratch Frechet distance."""

from .checkpoint import (Checkpoint, CheckpointError,
                         CheckpointFingerprintError, CheckpointVersionError,
                         load_checkpoint, save_checkpoint)
from .config import (ConfigurationError, SynthClassParams, TrainConfig,
                     config_fingerprint, derive_seed, load_config_file,
                     make_config)
from .data import (ArrayDataset, DataError, denormalize, load_directory,
                   normalize, render_palm_lines, synth_palm_lines,
                   synthetic_dataset)
from .fid import (GaussianStats, PoolEmbedder, RandomConvEmbedder, fid,
                  frechet_distance, gaussian_stats, load_stats, save_stats)
from .gan import (Discriminator, Generator, GeneratorLoss,
                  build_discriminator, build_generator, d_loss, g_loss,
                  sample_latent)
from .grids import grid_shape, make_grid, save_grid
from .training import (DivergenceError, LossTrace, TraceRecord,
                       fresh_checkpoint, sample, snapshot, train)
from .tv import batch_tv, tv_subgradient, tv_value

__version__ = "0.1.0"

__all__ = [
    "ArrayDataset", "Checkpoint", "CheckpointError",
    "CheckpointFingerprintError", "CheckpointVersionError",
    "ConfigurationError", "DataError", "Discriminator", "DivergenceError",
    "GaussianStats", "Generator", "GeneratorLoss", "LossTrace",
    "PoolEmbedder", "RandomConvEmbedder", "SynthClassParams", "TraceRecord",
    "TrainConfig", "batch_tv", "build_discriminator", "build_generator",
    "config_fingerprint", "d_loss", "denormalize", "derive_seed", "fid",
    "frechet_distance", "fresh_checkpoint", "g_loss", "gaussian_stats",
    "grid_shape", "load_checkpoint", "load_config_file", "load_directory",
    "load_stats", "make_config", "make_grid", "normalize",
    "render_palm_lines", "sample", "sample_latent", "save_checkpoint",
    "save_grid", "save_stats", "snapshot", "synth_palm_lines",
    "synthetic_dataset", "train", "tv_subgradient", "tv_value",
]
