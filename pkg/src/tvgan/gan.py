"""Convolutional generator/discriminator pair and the regularized losses.

Generator: a learned projection of the latent vector to a 4x4 feature map,
then fractionally-strided convolutions (kernel 4, stride 2, padding 1) that
double the resolution per stage, ending in tanh. Five stages at 64x64, four
at 32x32. Discriminator mirrors it with strided convolutions, leaky ReLU,
and a final fully connected sigmoid stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ConfigurationError, TrainConfig, derive_seed
from .tv import batch_tv

SCORE_EPS = 1e-7

_UP_STAGES = {32: 3, 64: 4}  # conv-transpose stages after the projection


class Generator(nn.Module):
    def __init__(self, latent_dim: int, image_size: int, base_channels: int):
        super().__init__()
        if image_size not in _UP_STAGES:
            raise ConfigurationError(
                f"image_size must be one of {sorted(_UP_STAGES)}, got {image_size}")
        if latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1")
        self.latent_dim = latent_dim
        self.image_size = image_size
        self.base_channels = base_channels
        n_up = _UP_STAGES[image_size]
        top = base_channels * 2 ** (n_up - 1)
        self.top_channels = top
        self.project = nn.Linear(latent_dim, top * 4 * 4)
        blocks: list[nn.Module] = [nn.BatchNorm2d(top), nn.ReLU()]
        channels = top
        for _ in range(n_up - 1):
            blocks += [
                nn.ConvTranspose2d(channels, channels // 2, 4, stride=2,
                                   padding=1),
                nn.BatchNorm2d(channels // 2),
                nn.ReLU(),
            ]
            channels //= 2
        blocks += [nn.ConvTranspose2d(channels, 1, 4, stride=2, padding=1),
                   nn.Tanh()]
        self.stages = nn.Sequential(*blocks)

    def forward(self, latents: torch.Tensor) -> torch.Tensor:
        if latents.ndim != 2 or latents.shape[1] != self.latent_dim:
            raise ValueError(
                f"expected (count, {self.latent_dim}) latents, "
                f"got {tuple(latents.shape)}")
        h = self.project(latents).view(-1, self.top_channels, 4, 4)
        return self.stages(h)


class Discriminator(nn.Module):
    def __init__(self, image_size: int, base_channels: int):
        super().__init__()
        if image_size not in _UP_STAGES:
            raise ConfigurationError(
                f"image_size must be one of {sorted(_UP_STAGES)}, got {image_size}")
        self.image_size = image_size
        n_down = _UP_STAGES[image_size]
        # No batch norm on the input stage.
        blocks: list[nn.Module] = [
            nn.Conv2d(1, base_channels, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        ]
        channels = base_channels
        for _ in range(n_down - 1):
            blocks += [
                nn.Conv2d(channels, channels * 2, 4, stride=2, padding=1),
                nn.BatchNorm2d(channels * 2),
                nn.LeakyReLU(0.2),
            ]
            channels *= 2
        self.stages = nn.Sequential(*blocks)
        self.classify = nn.Linear(channels * 4 * 4, 1)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[-1] != self.image_size:
            raise ValueError(
                f"expected (count, 1, {self.image_size}, {self.image_size}) "
                f"images, got {tuple(images.shape)}")
        h = self.stages(images)
        logits = self.classify(h.flatten(1))
        return torch.sigmoid(logits).view(-1)


def _init_weights(net: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                module.weight.normal_(0.0, 0.02, generator=gen)
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.BatchNorm2d):
                module.weight.normal_(1.0, 0.02, generator=gen)
                module.bias.zero_()


def build_generator(config: TrainConfig) -> Generator:
    """Freshly initialized generator, deterministic in config.seed."""
    net = Generator(config.latent_dim, config.image_size, config.base_channels)
    _init_weights(net, derive_seed(config.seed, "generator"))
    return net


def build_discriminator(config: TrainConfig) -> Discriminator:
    net = Discriminator(config.image_size, config.base_channels)
    _init_weights(net, derive_seed(config.seed, "discriminator"))
    return net


def sample_latent(count: int, latent_dim: int, seed: int) -> torch.Tensor:
    """(count, latent_dim) i.i.d. standard normal draws, fixed by seed."""
    if count < 1 or latent_dim < 1:
        raise ValueError("count and latent_dim must be >= 1")
    gen = torch.Generator().manual_seed(seed & ((1 << 63) - 1))
    return torch.randn(count, latent_dim, generator=gen)


def _checked_scores(scores) -> torch.Tensor:
    s = torch.as_tensor(scores)
    if torch.any((s < 0) | (s > 1)):
        raise ValueError("scores must lie in [0, 1] before clamping")
    return s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)


def d_loss(real_scores, fake_scores) -> torch.Tensor:
    """Discriminator loss: -mean(log real) - mean(log(1 - fake)).

    Minimized when real scores approach 1 and fake scores approach 0.
    """
    real = _checked_scores(real_scores)
    fake = _checked_scores(fake_scores)
    return -torch.log(real).mean() - torch.log1p(-fake).mean()


@dataclass(frozen=True)
class GeneratorLoss:
    """Decomposed generator objective; total = adversarial + lambda * tv."""

    adversarial: torch.Tensor
    tv: torch.Tensor
    total: torch.Tensor


def g_loss(fake_scores, generated, lambda_tv: float) -> GeneratorLoss:
    """Non-saturating generator loss plus the total-variation penalty.

    adversarial = -mean(log fake_scores): its derivative in each score is
    -1/score, so the generator keeps receiving gradient even when the
    discriminator confidently rejects its samples.
    """
    if lambda_tv < 0:
        raise ConfigurationError("lambda_tv must be >= 0")
    fake = _checked_scores(fake_scores)
    adversarial = -torch.log(fake).mean()
    tv = batch_tv(torch.as_tensor(generated), "mean")
    total = adversarial + lambda_tv * tv
    return GeneratorLoss(adversarial=adversarial, tv=tv, total=total)
