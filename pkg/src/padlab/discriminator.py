"""Convolutional critic used for GAN pretraining and adversarial encoder
training. Shapes derive from the generator config so one config echo rebuilds
both networks."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import GeneratorConfig
from .errors import ConfigError


class Discriminator(nn.Module):
    """Strided convs down the generator's resolution ladder to a scalar score.

    No normalization layers (the gradient penalty regularizes instead).
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.rng_seed + 1)
            ladder = list(reversed(config.resolutions))  # max .. base
            self.from_rgb = nn.Conv2d(3, config.channels_at(ladder[0]), 3, 1, 1)
            for n in ladder[:-1]:
                self.add_module(
                    f"down{n}",
                    nn.Conv2d(config.channels_at(n), config.channels_at(n // 2), 3, 2, 1),
                )
            base = config.base_resolution
            self.final = nn.Linear(config.channels_at(base) * base * base, 1)

    def forward(self, image: Tensor) -> Tensor:
        if image.ndim != 4 or image.shape[1] != 3:
            raise ConfigError(f"expected (B, 3, R, R) images, got {tuple(image.shape)}")
        x = F.leaky_relu(self.from_rgb(image), 0.2)
        for n in reversed(self.config.resolutions):
            if n == self.config.base_resolution:
                break
            x = F.leaky_relu(getattr(self, f"down{n}")(x), 0.2)
        return self.final(x.flatten(1)).squeeze(1)
