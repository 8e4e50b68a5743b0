"""Inversion encoder: residual backbone, feature pyramid, style heads and
padding-extracting convolutions.

The three pyramid levels feed hierarchical style heads (deepest level ->
coarsest generator layers). The middle level additionally feeds a small
squeeze-excitation residual trunk whose per-entity 1x1 heads emit the
coefficient grids the padding set is cropped from. Ring heads are
zero-initialized and the constant-input head carries a spatial bias, so a
fresh encoder starts exactly at the generator's native padding point.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import EncoderConfig, GeneratorConfig
from .errors import ConfigError, NumericError
from .geometry import CoefficientMap, PaddingSet, assemble_padding_set, coefficient_side, replaced_resolutions


class SqueezeExcite(nn.Module):
    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        hidden = max(channels // reduction, 4)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x: Tensor) -> Tensor:
        s = x.mean(dim=(2, 3))
        s = torch.sigmoid(self.fc2(F.relu(self.fc1(s))))
        return x * s.view(x.shape[0], -1, 1, 1)


class ResidualUnit(nn.Module):
    """3x3-3x3 residual block with batch norm and squeeze-excitation."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.se = SqueezeExcite(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.skip = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        y = self.bn1(self.conv1(x))
        y = F.leaky_relu(y, 0.2)
        y = self.se(self.bn2(self.conv2(y)))
        return F.leaky_relu(y + self.skip(x), 0.2)


class Backbone(nn.Module):
    """conv1 plus four strided residual stages; exposes the last three."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.conv1 = nn.Conv2d(3, config.conv1_channels, 3, 1, 1)
        prev = config.conv1_channels
        for i, (depth, ch) in enumerate(zip(config.stage_depths, config.stage_channels), start=2):
            blocks = [ResidualUnit(prev, ch, stride=2)]
            blocks += [ResidualUnit(ch, ch) for _ in range(depth - 1)]
            self.add_module(f"stage{i}", nn.Sequential(*blocks))
            prev = ch

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        x = F.leaky_relu(self.conv1(x), 0.2)
        x = self.stage2(x)
        c3 = self.stage3(x)
        c4 = self.stage4(c3)
        c5 = self.stage5(c4)
        return c3, c4, c5


class FeaturePyramid(nn.Module):
    """Top-down lateral fusion to a common channel width."""

    def __init__(self, in_channels: tuple[int, int, int], dim: int):
        super().__init__()
        self.lateral3 = nn.Conv2d(in_channels[0], dim, 1)
        self.lateral4 = nn.Conv2d(in_channels[1], dim, 1)
        self.lateral5 = nn.Conv2d(in_channels[2], dim, 1)
        self.smooth3 = nn.Conv2d(dim, dim, 3, 1, 1)
        self.smooth4 = nn.Conv2d(dim, dim, 3, 1, 1)

    def forward(self, c3: Tensor, c4: Tensor, c5: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        p5 = self.lateral5(c5)
        p4 = self.smooth4(self.lateral4(c4) + F.interpolate(p5, scale_factor=2, mode="nearest"))
        p3 = self.smooth3(self.lateral3(c3) + F.interpolate(p4, scale_factor=2, mode="nearest"))
        return p3, p4, p5


class Map2Style(nn.Module):
    """Strided-conv reduction of one pyramid level to a single style vector."""

    def __init__(self, in_channels: int, latent_dim: int, side: int):
        super().__init__()
        if side & (side - 1):
            raise ConfigError(f"pyramid side must be a power of two, got {side}")
        downs = side.bit_length() - 1
        layers: list[nn.Module] = []
        ch = in_channels
        for _ in range(max(downs, 1)):
            layers += [nn.Conv2d(ch, latent_dim, 3, 2, 1), nn.LeakyReLU(0.2)]
            ch = latent_dim
        self.convs = nn.Sequential(*layers)
        self.linear = nn.Linear(latent_dim, latent_dim)

    def forward(self, x: Tensor) -> Tensor:
        x = self.convs(x)
        return self.linear(x.flatten(1))


class BottleneckSE(nn.Module):
    """1x1 -> 3x3 -> 3x3 residual refinement with squeeze-excitation."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv3 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.se = SqueezeExcite(channels)

    def forward(self, x: Tensor) -> Tensor:
        y = F.leaky_relu(self.conv1(x), 0.2)
        y = F.leaky_relu(self.conv2(y), 0.2)
        y = self.se(self.conv3(y))
        return F.leaky_relu(x + y, 0.2)


class PaddingExtractor(nn.Module):
    """Coefficient grids from the middle pyramid level.

    Trunk resblocks refine the level, one 1x1 head per replaced entity adapts
    channels, and each head output is upsampled (bilinear) to the grid side
    P_max + 2. Ring heads start at zero; the constant head adds a spatial
    bias of the constant-input shape into the grid centre.
    """

    def __init__(self, pyramid_dim: int, gen_config: GeneratorConfig, num_blocks: int):
        super().__init__()
        self.gen_config = gen_config
        rings = replaced_resolutions(gen_config)
        self.grid_side = coefficient_side(gen_config) if rings else gen_config.base_resolution
        self.trunk = nn.Sequential(*[BottleneckSE(pyramid_dim) for _ in range(num_blocks)])
        base = gen_config.base_resolution
        if gen_config.replace_const_input:
            head = nn.Conv2d(pyramid_dim, gen_config.channels_at(base), 1, bias=False)
            nn.init.zeros_(head.weight)
            self.head_const = head
            self.const_bias = nn.Parameter(torch.zeros(gen_config.channels_at(base), base, base))
        else:
            self.head_const = None
        for n in rings:
            head = nn.Conv2d(pyramid_dim, gen_config.channels_at(n), 1)
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)
            self.add_module(f"head_ring{n}", head)

    def init_const_bias(self, const_input: Tensor) -> None:
        """Start the adapted constant input at the generator's trained one."""
        if self.head_const is None:
            raise ConfigError("config keeps the native constant input")
        with torch.no_grad():
            self.const_bias.copy_(const_input.detach())

    def _to_grid(self, x: Tensor) -> Tensor:
        if x.shape[-1] == self.grid_side:
            return x
        return F.interpolate(x, size=(self.grid_side, self.grid_side), mode="bilinear", align_corners=False)

    def forward(self, f_mid: Tensor) -> CoefficientMap:
        t = self.trunk(f_mid)
        const_grid = None
        if self.head_const is not None:
            g = self._to_grid(self.head_const(t))
            base = self.gen_config.base_resolution
            lo = (self.grid_side - base) // 2
            hi = self.grid_side - base - lo
            const_grid = g + F.pad(self.const_bias, (lo, hi, lo, hi)).unsqueeze(0)
        ring_grids = {
            n: self._to_grid(getattr(self, f"head_ring{n}")(t))
            for n in replaced_resolutions(self.gen_config)
        }
        return CoefficientMap(const_grid, ring_grids)


@dataclass
class InversionOutput:
    """Per-layer style codes plus the coefficient map (None when the config
    replaces nothing)."""

    w_plus: Tensor
    cmap: CoefficientMap | None


class Encoder(nn.Module):
    """Image -> (W+ styles, coefficient grids)."""

    def __init__(self, config: EncoderConfig, gen_config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.gen_config = gen_config
        split = config.split_for(gen_config.layer_count)
        self.latent_split = split
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.rng_seed)
            self.backbone = Backbone(config)
            self.fpn = FeaturePyramid(config.stage_channels[1:], config.pyramid_dim)
            sides = [config.input_resolution // s for s in (16, 8, 4)]  # deep, mid, fine
            heads: list[Map2Style] = []
            for count, side in zip(split, sides):
                heads += [
                    Map2Style(config.pyramid_dim, gen_config.latent_dim, side) for _ in range(count)
                ]
            self.styles = nn.ModuleList(heads)
            if replaced_resolutions(gen_config) or gen_config.replace_const_input:
                self.padding = PaddingExtractor(config.pyramid_dim, gen_config, config.padding_blocks)
            else:
                self.padding = None
        # style heads predict offsets from this vector (the harness sets it to
        # the generator's average code, so training starts on-manifold)
        self.register_buffer("style_offset", torch.zeros(gen_config.latent_dim))

    def backbone_features(self, image: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Pyramid levels (fine, mid, deep) at sides input/4, /8, /16."""
        image = self._prepare(image)
        return self.fpn(*self.backbone(image))

    def _prepare(self, image: Tensor) -> Tensor:
        if image.ndim == 3:
            image = image.unsqueeze(0)
        if image.ndim != 4 or image.shape[1] != 3:
            raise ConfigError(f"expected an RGB image batch, got shape {tuple(image.shape)}")
        if not torch.isfinite(image).all():
            raise NumericError("image contains non-finite values")
        r = self.config.input_resolution
        if image.shape[-2:] != (r, r):
            image = F.interpolate(image, size=(r, r), mode="bilinear", align_corners=False)
        return image

    def forward(self, image: Tensor) -> InversionOutput:
        fine, mid, deep = self.backbone_features(image)
        levels = (deep, mid, fine)
        codes = []
        i = 0
        for count, level in zip(self.latent_split, levels):
            for _ in range(count):
                codes.append(self.styles[i](level))
                i += 1
        w_plus = torch.stack(codes, dim=1) + self.style_offset
        cmap = self.padding(mid) if self.padding is not None else None
        return InversionOutput(w_plus, cmap)

    encode = forward


def padding_from(output: InversionOutput, generator) -> PaddingSet:
    """Assemble the padding set an inversion output implies for a generator.

    Falls back to the native set when the encoder predicts no coefficients.
    """
    cfg = generator.config
    batch = output.w_plus.shape[0]
    if output.cmap is None:
        return generator.default_padding(batch)
    return assemble_padding_set(output.cmap, cfg, native_const=generator.const_input.detach())
