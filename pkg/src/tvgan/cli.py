"""Command-line surface: train, sample, evaluate-fid, compute-tv, ablate-lambda."""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import subprocess
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (ConfigurationError, TrainConfig, config_fingerprint,
                     derive_seed, load_config_file, make_config,
                     to_flat_dict, valid_config_keys)
from .data import (ArrayDataset, DataError, load_directory, synthetic_dataset)
from .fid import (PoolEmbedder, RandomConvEmbedder, fid, frechet_distance,
                  gaussian_stats, load_stats, save_stats)
from .grids import save_grid
from .training import DivergenceError, fresh_checkpoint, sample, train
from .tv import batch_tv, tv_value

RUNS_DIR_ENV = "TVGAN_RUNS_DIR"
MANIFEST_NAME = "manifest.txt"


def _code_version() -> str:
    root = Path(__file__).resolve().parents[2]
    try:
        out = subprocess.run(
            ["git", "-C", str(root), "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    try:
        from importlib.metadata import version
        return "tvgan-" + version("tvgan")
    except Exception:
        return "tvgan-unknown"


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="flat key=value config file")
    for key in valid_config_keys():
        flag = "--" + key.replace("_", "-")
        if key == "synthetic":
            parser.add_argument(flag, dest=f"cfg_{key}", nargs="?",
                                const="true", default=None, metavar="BOOL")
        else:
            parser.add_argument(flag, dest=f"cfg_{key}", default=None,
                                metavar="VALUE")


def _config_from_args(args) -> TrainConfig:
    config = TrainConfig()
    if args.config:
        config = load_config_file(args.config, base=config)
    overrides = {key: value for key in valid_config_keys()
                 if (value := getattr(args, f"cfg_{key}")) is not None}
    config = make_config(overrides, base=config)
    config.validate()
    return config


def _dataset_from_config(config: TrainConfig) -> ArrayDataset:
    if config.synthetic:
        return synthetic_dataset(config.synth_count, config.image_size,
                                 config.synth)
    return load_directory(config.data_dir, config.image_size,
                          workers=config.workers)


def _runs_root(explicit) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(RUNS_DIR_ENV, "runs"))


def _write_manifest(run_dir: Path, config: TrainConfig,
                    dataset: ArrayDataset, **extra) -> None:
    lines = []
    for key, value in extra.items():
        lines.append(f"{key} = {value}")
    lines.append(f"code_version = {_code_version()}")
    lines.append(f"dataset_fingerprint = {dataset.fingerprint()}")
    lines.append(f"dataset_size = {len(dataset)}")
    lines.append("layout = manifest.txt, trace.csv, checkpoints/, grids/")
    for key, value in to_flat_dict(config).items():
        lines.append(f"config.{key} = {value}")
    (run_dir / MANIFEST_NAME).write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")


def _make_embedder(args):
    if args.embedder == "pool":
        return PoolEmbedder()
    return RandomConvEmbedder(seed=args.embedder_seed)


def _run_training(config: TrainConfig, run_dir: Path,
                  dataset: ArrayDataset) -> tuple[int, Path]:
    """Train one run into run_dir; returns (exit_code, final_checkpoint)."""
    ckpt_dir = run_dir / "checkpoints"
    grid_dir = run_dir / "grids"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    grid_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    _write_manifest(run_dir, config, dataset, status="running",
                    created_utc=started)
    grid_seed = derive_seed(config.seed, "grid")
    final_path = ckpt_dir / f"epoch_{config.epochs:04d}.tvgn"
    save_grid(grid_dir / "epoch_0000.png",
              sample(fresh_checkpoint(config), 16, grid_seed))

    def hook(epoch: int, freeze) -> None:
        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            ck = freeze()
            save_checkpoint(ckpt_dir / f"epoch_{epoch:04d}.tvgn", ck)
            save_grid(grid_dir / f"epoch_{epoch:04d}.png",
                      sample(ck, 16, grid_seed))

    clock = time.monotonic()
    try:
        _, trace = train(config, dataset, epoch_hook=hook)
    except DivergenceError as exc:
        exc.trace.to_csv(run_dir / "trace.csv")
        _write_manifest(run_dir, config, dataset, status="diverged",
                        created_utc=started,
                        wall_seconds=f"{time.monotonic() - clock:.1f}")
        print(f"error: {exc}", file=sys.stderr)
        return 1, final_path
    trace.to_csv(run_dir / "trace.csv")
    _write_manifest(
        run_dir, config, dataset, status="complete", created_utc=started,
        finished_utc=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        wall_seconds=f"{time.monotonic() - clock:.1f}")
    return 0, final_path


def cmd_train(args) -> int:
    config = _config_from_args(args)
    dataset = _dataset_from_config(config)
    run_name = args.run_name or "run-" + config_fingerprint(config).hex()[:12]
    run_dir = _runs_root(args.out) / run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    code, final_path = _run_training(config, run_dir, dataset)
    if code == 0:
        print(f"run directory: {run_dir}")
        print(f"final checkpoint: {final_path}")
    return code


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    batch = sample(ckpt, args.count, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid_path = out / "grid.png"
    batch_path = out / "batch.npy"
    save_grid(grid_path, batch)
    np.save(batch_path, batch)
    print(f"wrote {grid_path} and {batch_path} "
          f"({args.count} samples, epoch {ckpt.epoch})")
    return 0


def _load_generated(args, image_size: int) -> tuple[np.ndarray, str]:
    source = Path(args.generated)
    if source.is_dir():
        return load_directory(source, image_size).images, source.name
    ckpt = load_checkpoint(source)
    batch = sample(ckpt, args.count, args.seed)
    return batch, source.stem


def cmd_fid(args) -> int:
    if (args.real_dir is None) == (args.real_synth_seed is None):
        raise ConfigurationError(
            "exactly one of --real-dir / --real-synth-seed is required")
    embedder = _make_embedder(args)
    cache = Path(args.cache_real_stats) if args.cache_real_stats else None
    if cache is not None and cache.is_file():
        real_stats = load_stats(cache)
    else:
        if args.real_dir is not None:
            real = load_directory(args.real_dir, args.image_size).images
        else:
            params = replace(TrainConfig().synth,
                             class_seed=args.real_synth_seed)
            real = synthetic_dataset(args.count, args.image_size,
                                     params).images
        real_stats = gaussian_stats(embedder.embed(real))
        if cache is not None:
            save_stats(cache, real_stats)
    generated, model_name = _load_generated(args, args.image_size)
    score = frechet_distance(real_stats,
                             gaussian_stats(embedder.embed(generated)))
    print(f"fid = {score!r}")
    print(f"real_count = {real_stats.sample_count}")
    print(f"generated_count = {generated.shape[0]}")
    print(f"embedder = {embedder.name}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(f"model,fid\n{model_name},{score!r}\n", encoding="utf-8")
    print(f"report: {out}")
    return 0


def _raw_gray(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def cmd_tv(args) -> int:
    target = Path(args.path)
    if target.is_file():
        value = tv_value(_raw_gray(target))
        print(f"{target.name},{value!r}")
        return 0
    if not target.is_dir():
        raise ConfigurationError(f"no such file or directory: {target}")
    files = sorted(p for p in target.iterdir()
                   if p.suffix.lower() in (".png", ".bmp"))
    if not files:
        raise DataError(f"no PNG/BMP images in {target}")
    rows = [(p.name, tv_value(_raw_gray(p))) for p in files]
    out = Path(args.out)
    out.write_text(
        "image,tv\n" + "".join(f"{name},{value!r}\n" for name, value in rows),
        encoding="utf-8")
    mean = sum(v for _, v in rows) / len(rows)
    print(f"images = {len(rows)}")
    print(f"mean_tv = {mean!r}")
    print(f"report: {out}")
    return 0


def _ablate_one(flat_config: dict[str, str], run_dir_str: str,
                n_samples: int) -> dict:
    """Train one (lambda, seed) run and measure sample TV and FID."""
    config = make_config(flat_config)
    run_dir = Path(run_dir_str)
    dataset = _dataset_from_config(config)
    code, final_path = _run_training(config, run_dir, dataset)
    if code != 0:
        raise DivergenceError(f"run {run_dir.name} diverged",
                              trace=None)  # type: ignore[arg-type]
    ckpt = load_checkpoint(final_path)
    batch = sample(ckpt, n_samples, derive_seed(config.seed, "ablate-sample"))
    sample_tv = batch_tv(batch, "mean")
    score = fid(dataset.images, batch, RandomConvEmbedder())
    return {"lambda": config.lambda_tv, "seed": config.seed,
            "sample_tv": sample_tv, "fid": score}


def cmd_ablate_lambda(args) -> int:
    base = _config_from_args(args)
    lambdas = [float(v) for v in args.lambdas.split(",") if v.strip() != ""]
    seeds = [int(v) for v in args.seeds.split(",") if v.strip() != ""]
    if not lambdas or not seeds:
        raise ConfigurationError("--lambdas and --seeds must be non-empty")
    root = (_runs_root(args.out)
            / ("ablate-" + config_fingerprint(base).hex()[:12]))
    root.mkdir(parents=True, exist_ok=True)

    jobs = []
    for lam in lambdas:
        for seed in seeds:
            config = replace(base, lambda_tv=lam, seed=seed)
            run_dir = root / f"lam{lam:g}-seed{seed}"
            jobs.append((to_flat_dict(config), str(run_dir), args.samples))
    if args.parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=args.parallel) as pool:
            results = list(pool.map(_ablate_one, *zip(*jobs)))
    else:
        results = [_ablate_one(*job) for job in jobs]

    lines = ["lambda,tv_mean,tv_std,fid_mean,fid_std,seeds"]
    print("lambda    sample_tv (mean +- std)    fid (mean +- std)")
    for lam in lambdas:
        tvs = [r["sample_tv"] for r in results if r["lambda"] == lam]
        fids = [r["fid"] for r in results if r["lambda"] == lam]
        tv_mean, tv_std = float(np.mean(tvs)), float(np.std(tvs))
        fid_mean, fid_std = float(np.mean(fids)), float(np.std(fids))
        lines.append(f"{lam:g},{tv_mean!r},{tv_std!r},{fid_mean!r},"
                     f"{fid_std!r},{len(tvs)}")
        print(f"{lam:<10g}{tv_mean:>10.3f} +- {tv_std:<10.3f}"
              f"{fid_mean:>10.4f} +- {fid_std:<.4f}")
    summary = root / "ablation_summary.csv"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"summary: {summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvgan",
        description="Total-variation regularized convolutional GAN for "
                    "line-textured image synthesis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model into a run directory")
    _add_config_arguments(p_train)
    p_train.add_argument("--out", help=f"runs root (default ${RUNS_DIR_ENV} "
                                       "or ./runs)")
    p_train.add_argument("--run-name", help="run directory name "
                                            "(default derived from config)")
    p_train.set_defaults(func=cmd_train)

    p_sample = sub.add_parser("sample", help="sample a grid from a checkpoint")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--count", type=int, default=16)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True, help="output directory")
    p_sample.set_defaults(func=cmd_sample)

    p_fid = sub.add_parser("evaluate-fid",
                           help="Frechet distance between real and generated")
    p_fid.add_argument("--real-dir", help="directory of real PNG/BMP images")
    p_fid.add_argument("--real-synth-seed", type=int,
                       help="synthetic class seed to use as the real side")
    p_fid.add_argument("--generated", required=True,
                       help="checkpoint file or image directory")
    p_fid.add_argument("--count", type=int, default=1000,
                       help="samples to draw / synthesize per side")
    p_fid.add_argument("--seed", type=int, default=0)
    p_fid.add_argument("--image-size", type=int, default=64)
    p_fid.add_argument("--embedder", choices=("random-conv", "pool"),
                       default="random-conv")
    p_fid.add_argument("--embedder-seed", type=int, default=0)
    p_fid.add_argument("--cache-real-stats", metavar="PATH",
                       help="reuse (or create) cached real-side Gaussian "
                            "stats instead of re-embedding")
    p_fid.add_argument("--out", default="fid_report.csv")
    p_fid.set_defaults(func=cmd_fid)

    p_tv = sub.add_parser("compute-tv",
                          help="total variation of an image or directory "
                               "(raw gray levels)")
    p_tv.add_argument("path")
    p_tv.add_argument("--out", default="tv_report.csv")
    p_tv.set_defaults(func=cmd_tv)

    p_ab = sub.add_parser("ablate-lambda",
                          help="A/B the TV weight over seeds and report "
                               "sample TV and FID per lambda")
    _add_config_arguments(p_ab)
    p_ab.add_argument("--lambdas", required=True,
                      help="comma-separated lambda values, e.g. '0,3e-2'")
    p_ab.add_argument("--seeds", default="0,1,2",
                      help="comma-separated seeds")
    p_ab.add_argument("--samples", type=int, default=1000,
                      help="samples per run for the TV/FID measurements")
    p_ab.add_argument("--parallel", type=int, default=1)
    p_ab.add_argument("--out", help="output root for the ablation runs")
    p_ab.set_defaults(func=cmd_ablate_lambda)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DataError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
