"""Style-based convolutional generator with padding injection ports.

Each resolution runs two 3x3 styled convs (conv -> bias -> lrelu -> instance
norm -> style scale/shift). The first conv of every replaced resolution pads
its input with an instance ring instead of zeros, and the constant input is
taken from the padding set. With the native padding set (trained constant
input, zero rings) the arithmetic path is identical to a plain zero-padded
generator.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import GeneratorConfig
from .errors import ConfigError, NumericError
from .geometry import PaddingSet, apply_ring_padding, native_padding, replaced_resolutions

_NORM_EPS = 1e-8


def broadcast_to_wplus(w: Tensor, layer_count: int) -> Tensor:
    """Repeat a style vector across layers: (d,) -> (L, d), (B, d) -> (B, L, d)."""
    if w.ndim == 1:
        return w.unsqueeze(0).expand(layer_count, -1).clone()
    if w.ndim == 2:
        return w.unsqueeze(1).expand(-1, layer_count, -1).clone()
    raise ConfigError(f"expected a vector or batch of vectors, got shape {tuple(w.shape)}")


def _instance_norm(x: Tensor) -> Tensor:
    x = x - x.mean(dim=(2, 3), keepdim=True)
    return x / torch.sqrt(x.pow(2).mean(dim=(2, 3), keepdim=True) + _NORM_EPS)


class PixelNorm(nn.Module):
    def forward(self, x: Tensor) -> Tensor:
        return x / torch.sqrt(x.pow(2).mean(dim=-1, keepdim=True) + _NORM_EPS)


class MappingNetwork(nn.Module):
    """MLP from z to the disentangled style space, one row per sample."""

    def __init__(self, latent_dim: int, num_layers: int):
        super().__init__()
        self.latent_dim = latent_dim
        self.num_layers = num_layers
        self.norm = PixelNorm()
        for i in range(num_layers):
            fc = nn.Linear(latent_dim, latent_dim)
            nn.init.normal_(fc.weight, std=(2.0 / latent_dim) ** 0.5)
            nn.init.zeros_(fc.bias)
            self.add_module(f"fc{i}", fc)

    def forward(self, z: Tensor) -> Tensor:
        squeeze = z.ndim == 1
        if squeeze:
            z = z.unsqueeze(0)
        if z.ndim != 2 or z.shape[-1] != self.latent_dim:
            raise ConfigError(
                f"latent input must have dimension {self.latent_dim}, got shape {tuple(z.shape)}"
            )
        if not torch.isfinite(z).all():
            raise NumericError("latent input contains non-finite values")
        w = self.norm(z)
        for i in range(self.num_layers):
            w = F.leaky_relu(getattr(self, f"fc{i}")(w), 0.2)
        return w.squeeze(0) if squeeze else w


class StyleMod(nn.Module):
    """Adaptive instance-norm style head: w -> per-channel scale and shift."""

    def __init__(self, latent_dim: int, channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(2 * channels, latent_dim) / latent_dim**0.5)
        self.bias = nn.Parameter(torch.zeros(2 * channels))

    def forward(self, x: Tensor, w: Tensor) -> Tensor:
        style = F.linear(w, self.weight, self.bias)
        scale, shift = style.view(x.shape[0], 2, -1, 1, 1).unbind(1)
        return x * (scale + 1) + shift


class StyledConv(nn.Module):
    """3x3 conv on an externally padded input, then AdaIN modulation."""

    def __init__(self, in_channels: int, out_channels: int, latent_dim: int):
        super().__init__()
        fan_in = 9 * in_channels
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, 3, 3) * (2.0 / fan_in) ** 0.5)
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.style = StyleMod(latent_dim, out_channels)

    def forward(self, x: Tensor, w: Tensor, ring: Tensor | None = None) -> Tensor:
        x = F.pad(x, (1, 1, 1, 1)) if ring is None else apply_ring_padding(x, ring)
        x = F.conv2d(x, self.weight)
        x = x + self.bias.view(1, -1, 1, 1)
        x = F.leaky_relu(x, 0.2)
        return self.style(_instance_norm(x), w)


class ResolutionBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, latent_dim: int):
        super().__init__()
        self.conv0 = StyledConv(in_channels, out_channels, latent_dim)
        self.conv1 = StyledConv(out_channels, out_channels, latent_dim)

    def forward(self, x: Tensor, w0: Tensor, w1: Tensor, ring: Tensor | None) -> Tensor:
        return self.conv1(self.conv0(x, w0, ring), w1)


class ToRGB(nn.Module):
    """1x1 projection to RGB at the final resolution."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(3, in_channels, 1, 1) / in_channels**0.5)
        self.bias = nn.Parameter(torch.zeros(3))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight) + self.bias.view(1, -1, 1, 1)


class SynthesisNetwork(nn.Module):
    """Resolution ladder from the constant input to the RGB image."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        base = config.base_resolution
        self.const_input = nn.Parameter(torch.randn(config.channels_at(base), base, base))
        prev = config.channels_at(base)
        for n in config.resolutions:
            ch = config.channels_at(n)
            self.add_module(f"res{n}", ResolutionBlock(prev, ch, config.latent_dim))
            prev = ch
        self.torgb = ToRGB(prev)

    def forward(self, w_plus: Tensor, padding: PaddingSet) -> Tensor:
        replaced = set(replaced_resolutions(self.config))
        x = padding.const
        layer = 0
        for n in self.config.resolutions:
            if n != self.config.base_resolution:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            ring = padding.rings[n] if n in replaced else None
            block = getattr(self, f"res{n}")
            x = block(x, w_plus[:, layer], w_plus[:, layer + 1], ring)
            layer += 2
        return torch.tanh(self.torgb(x))


class Generator(nn.Module):
    """Mapping network + synthesis network + running average style vector.

    State is meant to be frozen after loading; synthesis mutates nothing and
    is safe for concurrent callers.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.rng_seed)
            self.mapping = MappingNetwork(config.latent_dim, config.mapping_layers)
            self.synthesis = SynthesisNetwork(config)
        self.register_buffer("w_avg", torch.zeros(config.latent_dim))

    @property
    def layer_count(self) -> int:
        return self.config.layer_count

    def map_latent(self, z: Tensor) -> Tensor:
        """z -> w; rows are mapped independently."""
        return self.mapping(z)

    def default_padding(self, batch_size: int = 1) -> PaddingSet:
        """Native operating point: trained constant input and zero rings."""
        return native_padding(self.config, self.const_input.detach(), batch_size)

    @property
    def const_input(self) -> Tensor:
        return self.synthesis.const_input

    def average_wplus(self, batch_size: int | None = None) -> Tensor:
        """The average style vector broadcast to all layers."""
        w = broadcast_to_wplus(self.w_avg, self.layer_count)
        return w if batch_size is None else w.unsqueeze(0).expand(batch_size, -1, -1).clone()

    def synthesize(self, w_plus: Tensor, padding: PaddingSet | None = None) -> Tensor:
        """Render an image from per-layer styles and a padding set.

        Accepts (L, d) or (B, L, d) styles; ``padding=None`` uses the native
        set. Returns (3, R, R) for unbatched input, else (B, 3, R, R).
        """
        squeeze = w_plus.ndim == 2
        if squeeze:
            w_plus = w_plus.unsqueeze(0)
        if w_plus.ndim != 3 or w_plus.shape[1:] != (self.layer_count, self.config.latent_dim):
            raise ConfigError(
                f"w_plus must be (B, {self.layer_count}, {self.config.latent_dim}), "
                f"got {tuple(w_plus.shape)}"
            )
        if not torch.isfinite(w_plus).all():
            raise NumericError("w_plus contains non-finite values")
        if padding is None:
            padding = self.default_padding(w_plus.shape[0])
        padding.validate_for(self.config)
        if padding.batch_size != w_plus.shape[0]:
            raise ConfigError(
                f"padding batch {padding.batch_size} != style batch {w_plus.shape[0]}"
            )
        img = self.synthesis(w_plus, padding)
        return img.squeeze(0) if squeeze else img

    forward = synthesize
