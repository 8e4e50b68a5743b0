"""Training objectives for the encoder and the discriminator.

Reduction conventions (loss magnitudes depend on them, trends do not):
pixel and perceptual losses are per-sample RMS values averaged over the
batch; the latent regularizer is the plain Euclidean norm per style row,
averaged over rows and batch. The discriminator objective is a score
difference plus a gradient penalty on real samples, using the unsquared
gradient norm by default (``squared`` switches to the conventional variant).

The default feature extractor and identity embedder are frozen random
networks with documented seeds: deterministic, download-free stand-ins that
any pretrained network can replace behind the same callable interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import LossWeights
from .errors import ConfigError, NumericError

DEFAULT_PERCEPTUAL_SEED = 71
DEFAULT_IDENTITY_SEED = 72


def _per_sample_rms(diff: Tensor) -> Tensor:
    return diff.flatten(1).pow(2).mean(dim=1).sqrt()


def pixel_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Per-sample RMS of the pixel difference, averaged over the batch."""
    if x.shape != x_hat.shape:
        raise ConfigError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if x.ndim == 3:
        x, x_hat = x.unsqueeze(0), x_hat.unsqueeze(0)
    return _per_sample_rms(x - x_hat).mean()


def perceptual_distances(x: Tensor, x_hat: Tensor, extractor) -> Tensor:
    """Per-sample feature-stack RMS distance, uniform layer weights: (B,)."""
    if x.ndim == 3:
        x, x_hat = x.unsqueeze(0), x_hat.unsqueeze(0)
    feats_x = extractor(x)
    feats_y = extractor(x_hat)
    if len(feats_x) != len(feats_y) or not feats_x:
        raise ConfigError("feature extractor returned mismatched or empty stacks")
    per_layer = [_per_sample_rms(a - b) for a, b in zip(feats_x, feats_y)]
    return torch.stack(per_layer).mean(dim=0)


def perceptual_loss(x: Tensor, x_hat: Tensor, extractor) -> Tensor:
    """Batch-mean perceptual distance."""
    return perceptual_distances(x, x_hat, extractor).mean()


def identity_loss(x: Tensor, x_hat: Tensor, embedder) -> Tensor:
    """1 - cosine similarity of the identity embeddings, in [0, 2]."""
    if x.ndim == 3:
        x, x_hat = x.unsqueeze(0), x_hat.unsqueeze(0)
    e1, e2 = embedder(x), embedder(x_hat)
    n1 = e1.norm(dim=-1)
    n2 = e2.norm(dim=-1)
    if (n1 < 1e-12).any() or (n2 < 1e-12).any():
        raise NumericError("identity embedding has zero norm; cosine similarity undefined")
    cos = (e1 * e2).sum(dim=-1) / (n1 * n2)
    return (1 - cos).mean()


def adversarial_loss_encoder(disc, fake: Tensor) -> Tensor:
    """Negative mean discriminator score of the reconstructions."""
    return -disc(fake).mean()


def regularization_loss(w_plus: Tensor, w_avg: Tensor) -> Tensor:
    """Mean Euclidean distance of every style row to the average code."""
    if w_plus.ndim == 2:
        w_plus = w_plus.unsqueeze(0)
    if w_plus.shape[-1] != w_avg.shape[-1]:
        raise ConfigError(
            f"style dim {w_plus.shape[-1]} != average code dim {w_avg.shape[-1]}"
        )
    return (w_plus - w_avg).norm(dim=-1).mean()


@dataclass
class LossParts:
    """Individual terms of the encoder objective (missing terms count as 0)."""

    pixel: Tensor | float = 0.0
    perceptual: Tensor | float = 0.0
    identity: Tensor | float = 0.0
    adversarial: Tensor | float = 0.0
    regularization: Tensor | float = 0.0


def total_encoder_loss(parts: LossParts, weights: LossWeights) -> Tensor:
    """Weighted sum of the encoder loss terms."""
    total = (
        weights.pixel * parts.pixel
        + weights.perceptual * parts.perceptual
        + weights.identity * parts.identity
        + weights.adversarial * parts.adversarial
        + weights.regularization * parts.regularization
    )
    return total if isinstance(total, Tensor) else torch.tensor(float(total))


def gradient_penalty(disc, real: Tensor, squared: bool = False) -> Tensor:
    """E[||grad_x D(x)||] over real samples (squared variant optional).

    Uses the caller's tensor when it already carries gradient, so the
    penalty stays differentiable w.r.t. the input; otherwise a grad-enabled
    leaf copy is made (the usual case when training the discriminator).
    """
    x = real if real.requires_grad else real.detach().requires_grad_(True)
    scores = disc(x)
    grads = torch.autograd.grad(scores.sum(), x, create_graph=True)[0]
    norms = grads.flatten(1).norm(dim=1)
    return (norms.pow(2) if squared else norms).mean()


def discriminator_loss(
    disc, real: Tensor, fake: Tensor, gamma: float, squared: bool = False
) -> Tensor:
    """Score difference plus gamma/2-weighted gradient penalty on reals."""
    loss = disc(fake).mean() - disc(real).mean()
    if gamma > 0:
        loss = loss + 0.5 * gamma * gradient_penalty(disc, real, squared=squared)
    return loss


def _freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module.eval()


class RandomFeaturePyramid(nn.Module):
    """Frozen 5-layer random conv pyramid used as the default perceptual
    feature extractor. tanh activations keep it smooth everywhere."""

    def __init__(self, seed: int = DEFAULT_PERCEPTUAL_SEED):
        super().__init__()
        channels = [3, 16, 32, 32, 64, 64]
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.convs = nn.ModuleList(
                nn.Conv2d(channels[i], channels[i + 1], 3, stride=2, padding=1)
                for i in range(5)
            )
        _freeze(self)

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        for conv in self.convs:
            x = torch.tanh(conv(x))
            feats.append(x)
        return feats


class RandomEmbedder(nn.Module):
    """Frozen random embedder standing in for a pretrained identity network.
    Returns unit-norm vectors."""

    def __init__(self, seed: int = DEFAULT_IDENTITY_SEED, dim: int = 64):
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.convs = nn.ModuleList(
                [nn.Conv2d(3, 16, 3, 2, 1), nn.Conv2d(16, 32, 3, 2, 1), nn.Conv2d(32, 64, 3, 2, 1)]
            )
            self.linear = nn.Linear(64, dim)
        _freeze(self)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = torch.tanh(conv(x))
        e = self.linear(x.mean(dim=(2, 3)))
        norms = e.norm(dim=-1, keepdim=True)
        if (norms < 1e-12).any():
            raise NumericError("identity embedding collapsed to zero norm")
        return e / norms
