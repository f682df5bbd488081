"""Alternating minimax training with seeded reproducibility and tracing.

Every stochastic draw (epoch shuffles, latent batches) comes from a per-epoch
generator seeded by (config.seed, epoch), so resuming from an epoch-boundary
checkpoint replays the exact stream the uninterrupted run would have used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .checkpoint import Checkpoint, CheckpointFingerprintError
from .config import TrainConfig, config_fingerprint, derive_seed
from .data import ArrayDataset, DataError
from .gan import (Discriminator, Generator, build_discriminator,
                  build_generator, d_loss, g_loss, sample_latent)

TRACE_HEADER = "iter,epoch,d_loss,g_adv,g_tv,g_total"
DIVERGENCE_LIMIT = 50  # consecutive non-finite iterations before aborting

_ADAM_FIELDS = ("step", "exp_avg", "exp_avg_sq")


class DivergenceError(RuntimeError):
    """Training produced non-finite losses for too many iterations."""

    def __init__(self, message: str, trace: "LossTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    epoch: int
    d_loss: float
    g_adv: float
    g_tv: float
    g_total: float


class LossTrace:
    """Per-iteration loss records, one per generator update."""

    def __init__(self, records: list[TraceRecord] | None = None):
        self.records = list(records) if records else []

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, LossTrace) and self.records == other.records

    def epoch_mean(self, epoch: int, field: str) -> float:
        values = [getattr(r, field) for r in self.records if r.epoch == epoch]
        if not values:
            raise ValueError(f"no records for epoch {epoch}")
        return sum(values) / len(values)

    def to_csv(self, path) -> None:
        lines = [TRACE_HEADER]
        for r in self.records:
            lines.append(f"{r.iteration},{r.epoch},{r.d_loss!r},{r.g_adv!r},"
                         f"{r.g_tv!r},{r.g_total!r}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "LossTrace":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.strip() for line in fh if line.strip()]
        if not lines or lines[0] != TRACE_HEADER:
            raise ValueError(f"{path}: not a loss trace CSV")
        records = []
        for line in lines[1:]:
            it, ep, dl, ga, gt, gtot = line.split(",")
            records.append(TraceRecord(int(it), int(ep), float(dl),
                                       float(ga), float(gt), float(gtot)))
        return cls(records)


def _model_state_numpy(model: torch.nn.Module) -> dict[str, np.ndarray]:
    return {key: value.detach().cpu().numpy().astype(np.float32)
            for key, value in model.state_dict().items()}


def _apply_model_state(model: torch.nn.Module,
                       state: dict[str, np.ndarray]) -> None:
    targets = model.state_dict()
    tensors = {}
    for key, arr in state.items():
        if key not in targets:
            raise ValueError(f"unexpected parameter {key!r} in checkpoint")
        tensors[key] = torch.from_numpy(np.asarray(arr)).to(
            dtype=targets[key].dtype)
    model.load_state_dict(tensors, strict=True)


def _opt_state_numpy(opt: torch.optim.Optimizer,
                     model: torch.nn.Module) -> dict[str, np.ndarray]:
    names = [name for name, _ in model.named_parameters()]
    flat: dict[str, np.ndarray] = {}
    for index, entry in opt.state_dict()["state"].items():
        for field in _ADAM_FIELDS:
            value = entry[field]
            value = value.detach().cpu().numpy() if torch.is_tensor(value) \
                else np.asarray(value)
            flat[f"{names[index]}/{field}"] = value.astype(np.float32)
    return flat


def _apply_opt_state(opt: torch.optim.Optimizer, model: torch.nn.Module,
                     flat: dict[str, np.ndarray]) -> None:
    if not flat:
        return
    names = [name for name, _ in model.named_parameters()]
    state_dict = opt.state_dict()
    state: dict[int, dict] = {}
    for index, name in enumerate(names):
        entry = {}
        for field in _ADAM_FIELDS:
            key = f"{name}/{field}"
            if key in flat:
                arr = np.asarray(flat[key])
                if field == "step":
                    entry[field] = torch.tensor(float(arr.reshape(-1)[0]))
                else:
                    entry[field] = torch.from_numpy(arr.copy())
        if entry:
            state[index] = entry
    state_dict["state"] = state
    opt.load_state_dict(state_dict)


def snapshot(gen: Generator, disc: Discriminator,
             gen_opt: torch.optim.Optimizer, disc_opt: torch.optim.Optimizer,
             epoch: int, fingerprint: bytes) -> Checkpoint:
    """Freeze the full training state into a Checkpoint."""
    return Checkpoint(
        gen_state=_model_state_numpy(gen),
        disc_state=_model_state_numpy(disc),
        gen_opt_state=_opt_state_numpy(gen_opt, gen),
        disc_opt_state=_opt_state_numpy(disc_opt, disc),
        epoch=epoch,
        latent_dim=gen.latent_dim,
        image_size=gen.image_size,
        base_channels=gen.base_channels,
        config_fingerprint=fingerprint,
    )


def fresh_checkpoint(config: TrainConfig) -> Checkpoint:
    """Epoch-0 state: initialized networks, empty optimizer state."""
    gen = build_generator(config)
    disc = build_discriminator(config)
    gen_opt, disc_opt = _make_optimizers(config, gen, disc)
    return snapshot(gen, disc, gen_opt, disc_opt, epoch=0,
                    fingerprint=config_fingerprint(config))


def _make_optimizers(config, gen, disc):
    betas = (config.adam_beta1, config.adam_beta2)
    gen_opt = torch.optim.Adam(gen.parameters(), lr=config.learning_rate,
                               betas=betas)
    disc_opt = torch.optim.Adam(disc.parameters(), lr=config.learning_rate,
                                betas=betas)
    return gen_opt, disc_opt


def train(config: TrainConfig, dataset: ArrayDataset, *,
          resume_from: Checkpoint | None = None,
          allow_config_mismatch: bool = False,
          epoch_hook=None) -> tuple[Checkpoint, LossTrace]:
    """Run alternating discriminator/generator updates to config.epochs.

    Per iteration: one discriminator step on a real batch and a freshly
    generated (detached) fake batch, then one generator step on a new latent
    batch. Partial trailing batches are dropped. `epoch_hook(epoch, freeze)`
    is invoked after each epoch with a zero-argument checkpoint factory.
    """
    config.validate()
    count = len(dataset)
    if count < config.batch_size:
        raise DataError(
            f"dataset has {count} images, need at least one batch "
            f"of {config.batch_size}")
    if dataset.image_size != config.image_size:
        raise DataError(
            f"dataset images are {dataset.image_size}px, config expects "
            f"{config.image_size}px")
    iters_per_epoch = count // config.batch_size
    fingerprint = config_fingerprint(config)

    gen = build_generator(config)
    disc = build_discriminator(config)
    gen_opt, disc_opt = _make_optimizers(config, gen, disc)
    start_epoch = 0
    if resume_from is not None:
        if (resume_from.config_fingerprint != fingerprint
                and not allow_config_mismatch):
            raise CheckpointFingerprintError(
                "checkpoint config fingerprint does not match this config "
                "(pass allow_config_mismatch=True to override)")
        _apply_model_state(gen, resume_from.gen_state)
        _apply_model_state(disc, resume_from.disc_state)
        _apply_opt_state(gen_opt, gen, resume_from.gen_opt_state)
        _apply_opt_state(disc_opt, disc, resume_from.disc_opt_state)
        start_epoch = resume_from.epoch

    images = torch.from_numpy(dataset.images)
    batch = config.batch_size
    trace = LossTrace()
    gen.train()
    disc.train()
    nonfinite_streak = 0

    for epoch in range(start_epoch + 1, config.epochs + 1):
        epoch_rng = torch.Generator().manual_seed(
            derive_seed(config.seed, "epoch", epoch))
        order = torch.randperm(count, generator=epoch_rng)
        for step in range(iters_per_epoch):
            real = images[order[step * batch:(step + 1) * batch]]

            latents = torch.randn(batch, config.latent_dim,
                                  generator=epoch_rng)
            with torch.no_grad():
                fake = gen(latents)
            loss_d = d_loss(disc(real), disc(fake))
            disc_opt.zero_grad()
            loss_d.backward()
            disc_opt.step()

            latents = torch.randn(batch, config.latent_dim,
                                  generator=epoch_rng)
            fake = gen(latents)
            losses = g_loss(disc(fake), fake, config.lambda_tv)
            gen_opt.zero_grad()
            losses.total.backward()
            gen_opt.step()

            record = TraceRecord(
                iteration=(epoch - 1) * iters_per_epoch + step,
                epoch=epoch,
                d_loss=loss_d.detach().item(),
                g_adv=losses.adversarial.detach().item(),
                g_tv=losses.tv.detach().item(),
                g_total=losses.total.detach().item(),
            )
            trace.append(record)
            finite = all(math.isfinite(v) for v in
                         (record.d_loss, record.g_adv, record.g_tv,
                          record.g_total))
            nonfinite_streak = 0 if finite else nonfinite_streak + 1
            if nonfinite_streak >= DIVERGENCE_LIMIT:
                raise DivergenceError(
                    f"losses non-finite for {DIVERGENCE_LIMIT} consecutive "
                    f"iterations (epoch {epoch})", trace)
        if epoch_hook is not None:
            frozen_epoch = epoch
            epoch_hook(epoch, lambda: snapshot(
                gen, disc, gen_opt, disc_opt, frozen_epoch, fingerprint))

    final_epoch = max(start_epoch, config.epochs)
    final = snapshot(gen, disc, gen_opt, disc_opt, final_epoch, fingerprint)
    return final, trace


def sample(checkpoint: Checkpoint, count: int, seed: int) -> np.ndarray:
    """Generate (count, 1, S, S) images from a checkpoint, evaluation mode."""
    gen = Generator(checkpoint.latent_dim, checkpoint.image_size,
                    checkpoint.base_channels)
    _apply_model_state(gen, checkpoint.gen_state)
    gen.eval()
    latents = sample_latent(count, checkpoint.latent_dim, seed)
    with torch.no_grad():
        return gen(latents).numpy()
