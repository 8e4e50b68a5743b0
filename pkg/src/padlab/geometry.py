"""Index arithmetic of the padding space.

A *ring* is the one-cell border of the (N+2) x (N+2) frame that pads an
N x N feature map for a 3x3 convolution, so it has 4N+4 cells per channel.
The canonical traversal order is clockwise from the top-left corner:

    top row left->right, right column top->bottom (corners excluded),
    bottom row right->left, left column bottom->top (corners excluded).

A padding set bundles the adapted constant input with one ring per replaced
resolution. All rings and the constant input are cropped from coefficient
grids of side P_max + 2 along a nested crop ladder (34 -> 18 -> 10 -> 6 -> 4
at the default P_max = 32).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import torch
from torch import Tensor

from .config import GeneratorConfig
from .errors import ConfigError, PaddingMismatchError

_BORDER_INDEX_CACHE: dict[int, Tensor] = {}


def ring_size(resolution: int) -> int:
    """Cells per channel in the ring padding an N x N feature: 4N + 4."""
    if resolution <= 0:
        raise ConfigError(f"ring resolution must be positive, got {resolution}")
    return 4 * resolution + 4


def border_coordinates(side: int) -> list[tuple[int, int]]:
    """(row, col) cells of a side x side frame border in canonical order."""
    if side < 3:
        raise ConfigError(f"frame side must be at least 3, got {side}")
    coords = [(0, j) for j in range(side)]
    coords += [(i, side - 1) for i in range(1, side - 1)]
    coords += [(side - 1, j) for j in range(side - 1, -1, -1)]
    coords += [(i, 0) for i in range(side - 2, 0, -1)]
    return coords


def _border_index(side: int) -> Tensor:
    """Flat indices into a row-major side*side grid, canonical border order."""
    idx = _BORDER_INDEX_CACHE.get(side)
    if idx is None:
        idx = torch.tensor([r * side + c for r, c in border_coordinates(side)], dtype=torch.long)
        _BORDER_INDEX_CACHE[side] = idx
    return idx


def extract_ring(frame: Tensor) -> Tensor:
    """Read the border of ``frame`` (..., S, S) as a ring (..., 4S-4)."""
    if frame.ndim < 2 or frame.shape[-1] != frame.shape[-2]:
        raise ConfigError(f"frame must be square in its last two dims, got {tuple(frame.shape)}")
    side = frame.shape[-1]
    idx = _border_index(side)
    return frame.flatten(-2)[..., idx]


def apply_ring_padding(feature: Tensor, ring: Tensor) -> Tensor:
    """Pad ``feature`` (..., N, N) with ``ring`` (..., 4N+4) to (..., N+2, N+2).

    The centre equals the feature bitwise; the border carries the ring in
    canonical order, so a zero ring reproduces standard zero padding exactly.
    """
    if feature.shape[-1] != feature.shape[-2]:
        raise ConfigError(f"feature must be square, got {tuple(feature.shape)}")
    n = feature.shape[-1]
    if ring.shape[-1] != ring_size(n):
        raise PaddingMismatchError(
            f"ring length {ring.shape[-1]} does not match feature side {n} "
            f"(expected {ring_size(n)})"
        )
    if ring.shape[:-1] != feature.shape[:-2]:
        raise PaddingMismatchError(
            f"ring leading dims {tuple(ring.shape[:-1])} do not match feature "
            f"leading dims {tuple(feature.shape[:-2])}"
        )
    side = n + 2
    out = feature.new_zeros(*feature.shape[:-2], side, side)
    out[..., 1:-1, 1:-1] = feature
    flat = out.view(*feature.shape[:-2], side * side)
    flat[..., _border_index(side)] = ring
    return out


def center_crop(grid: Tensor, side: int) -> Tensor:
    """Central side x side crop of a square grid (odd margins not allowed)."""
    full = grid.shape[-1]
    if grid.shape[-2] != full:
        raise ConfigError(f"grid must be square, got {tuple(grid.shape)}")
    if side > full or (full - side) % 2:
        raise ConfigError(f"cannot centre-crop side {side} from side {full}")
    start = (full - side) // 2
    return grid[..., start : start + side, start : start + side]


def replaced_resolutions(config: GeneratorConfig) -> list[int]:
    """Resolutions whose first conv reads an instance ring."""
    p_max = config.replaced_max_resolution
    if p_max is None:
        return []
    return [n for n in config.resolutions if n <= p_max]


def replaced_layer_indices(config: GeneratorConfig) -> list[int]:
    """Replaced entities by index: 0 for the constant input, odd layer
    indices for the first conv of each replaced resolution."""
    out = [0] if config.replace_const_input else []
    for n in replaced_resolutions(config):
        m = config.resolutions.index(n) + 1
        out.append(2 * m - 1)
    return out


@dataclass(frozen=True)
class LayerEntry:
    index: int  # 1-based
    resolution: int
    conv_position: int  # 0 = first conv of the resolution, 1 = second
    padding_replaced: bool


def layer_table(config: GeneratorConfig) -> list[LayerEntry]:
    """One entry per styled conv layer, 1..L, with its replacement flag."""
    replaced = set(replaced_resolutions(config))
    table = []
    for m, n in enumerate(config.resolutions, start=1):
        table.append(LayerEntry(2 * m - 1, n, 0, n in replaced))
        table.append(LayerEntry(2 * m, n, 1, False))
    return table


# --- padding sets -----------------------------------------------------------


@dataclass
class PaddingSet:
    """Adapted constant input plus one ring per replaced resolution.

    Tensors carry a batch dimension: ``const`` is (B, C, base, base) and each
    ring is (B, C_N, 4N+4). Componentwise arithmetic supports interpolation
    and edit directions.
    """

    const: Tensor
    rings: dict[int, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.const.ndim != 4 or self.const.shape[-1] != self.const.shape[-2]:
            raise ConfigError(
                f"const must be (B, C, base, base), got {tuple(self.const.shape)}"
            )
        b = self.const.shape[0]
        for n, ring in self.rings.items():
            if ring.ndim != 3 or ring.shape[0] != b or ring.shape[-1] != ring_size(n):
                raise PaddingMismatchError(
                    f"ring at resolution {n} must be ({b}, C, {ring_size(n)}), "
                    f"got {tuple(ring.shape)}"
                )

    @property
    def batch_size(self) -> int:
        return self.const.shape[0]

    def validate_for(self, config: GeneratorConfig) -> None:
        expected = replaced_resolutions(config)
        got = sorted(self.rings)
        if got != expected:
            raise PaddingMismatchError(
                f"padding set covers resolutions {got}, config replaces {expected}"
            )
        base = config.base_resolution
        if self.const.shape[1:] != (config.channels_at(base), base, base):
            raise PaddingMismatchError(
                f"const shape {tuple(self.const.shape[1:])} does not match config "
                f"({config.channels_at(base)}, {base}, {base})"
            )
        for n in expected:
            if self.rings[n].shape[1] != config.channels_at(n):
                raise PaddingMismatchError(
                    f"ring at {n} has {self.rings[n].shape[1]} channels, "
                    f"config expects {config.channels_at(n)}"
                )
        for t in self.tensors():
            if not torch.isfinite(t).all():
                raise ConfigError("padding set contains non-finite values")

    def tensors(self) -> Iterator[Tensor]:
        yield self.const
        for n in sorted(self.rings):
            yield self.rings[n]

    def _map(self, fn) -> "PaddingSet":
        return PaddingSet(fn(self.const), {n: fn(r) for n, r in self.rings.items()})

    def _zip(self, other: "PaddingSet", fn) -> "PaddingSet":
        if sorted(self.rings) != sorted(other.rings):
            raise PaddingMismatchError("padding sets cover different resolutions")
        return PaddingSet(
            fn(self.const, other.const),
            {n: fn(r, other.rings[n]) for n, r in self.rings.items()},
        )

    def __add__(self, other: "PaddingSet") -> "PaddingSet":
        return self._zip(other, torch.add)

    def __sub__(self, other: "PaddingSet") -> "PaddingSet":
        return self._zip(other, torch.sub)

    def __mul__(self, scalar: float) -> "PaddingSet":
        return self._map(lambda t: t * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "PaddingSet":
        return self._map(torch.neg)

    def lerp(self, other: "PaddingSet", t: float) -> "PaddingSet":
        # affine form keeps the endpoints and midpoint exact in floats
        return self._zip(other, lambda a, b: (1.0 - t) * a + t * b)

    def detach(self) -> "PaddingSet":
        return self._map(lambda x: x.detach())

    def clone(self) -> "PaddingSet":
        return self._map(lambda x: x.detach().clone())

    def to(self, *args, **kwargs) -> "PaddingSet":
        return self._map(lambda x: x.to(*args, **kwargs))

    def __getitem__(self, i) -> "PaddingSet":
        sel = i if isinstance(i, slice) else slice(i, i + 1)
        return self._map(lambda t: t[sel])

    def equal(self, other: "PaddingSet") -> bool:
        return sorted(self.rings) == sorted(other.rings) and all(
            torch.equal(a, b) for a, b in zip(self.tensors(), other.tensors())
        )

    def allclose(self, other: "PaddingSet", **kwargs) -> bool:
        return sorted(self.rings) == sorted(other.rings) and all(
            torch.allclose(a, b, **kwargs) for a, b in zip(self.tensors(), other.tensors())
        )


def native_padding(config: GeneratorConfig, const_input: Tensor, batch_size: int = 1) -> PaddingSet:
    """The generator's original operating point: trained constant input plus
    zero rings for every replaced resolution."""
    if const_input.ndim == 3:
        const = const_input.unsqueeze(0).expand(batch_size, -1, -1, -1).clone()
    else:
        const = const_input.clone()
    rings = {
        n: const_input.new_zeros(batch_size, config.channels_at(n), ring_size(n))
        for n in replaced_resolutions(config)
    }
    return PaddingSet(const, rings)


# --- coefficient maps -------------------------------------------------------


@dataclass
class CoefficientMap:
    """Channel-adapted coefficient grids the padding set is cropped from.

    Every grid shares one spatial side S = P_max + 2 and comes from the same
    trunk map (the per-entity 1x1 heads adapt channels only). ``const_grid``
    feeds the constant input; ``ring_grids[N]`` feeds the ring at resolution N.
    """

    const_grid: Tensor | None
    ring_grids: dict[int, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        sides = {g.shape[-1] for g in self.grids()}
        if len(sides) > 1:
            raise ConfigError(f"coefficient grids disagree on side: {sorted(sides)}")
        for g in self.grids():
            if g.ndim != 4 or g.shape[-1] != g.shape[-2]:
                raise ConfigError(f"coefficient grid must be (B, C, S, S), got {tuple(g.shape)}")

    def grids(self) -> Iterator[Tensor]:
        if self.const_grid is not None:
            yield self.const_grid
        for n in sorted(self.ring_grids):
            yield self.ring_grids[n]

    @property
    def side(self) -> int:
        for g in self.grids():
            return g.shape[-1]
        raise ConfigError("empty coefficient map")

    @classmethod
    def from_grid(cls, grid: Tensor, config: GeneratorConfig) -> "CoefficientMap":
        """Share one uniform-width grid across all replaced entities."""
        const_grid = grid if config.replace_const_input else None
        return cls(const_grid, {n: grid for n in replaced_resolutions(config)})


def coefficient_side(config: GeneratorConfig) -> int:
    """Minimum grid side able to pad P_max x P_max features: P_max + 2."""
    p_max = config.replaced_max_resolution
    if p_max is None:
        raise ConfigError("config replaces no rings; no coefficient side defined")
    return p_max + 2


def crop_ladder(config: GeneratorConfig) -> dict[int, int]:
    """Crop side per replaced resolution: ring(N) reads the border of the
    central (N+2)^2 patch of the coefficient grid."""
    return {n: n + 2 for n in replaced_resolutions(config)}


def assemble_padding_set(
    cmap: CoefficientMap | Tensor,
    config: GeneratorConfig,
    native_const: Tensor | None = None,
) -> PaddingSet:
    """Crop a padding set out of channel-adapted coefficient grids.

    Pure geometry: the constant input is the central base x base patch of the
    const grid, ring(N) is the border of the central (N+2)^2 patch of its
    grid. Accepts a bare tensor as shorthand for a shared uniform grid.
    When the config keeps the constant input native, ``native_const`` supplies
    it instead of a crop.
    """
    if isinstance(cmap, Tensor):
        cmap = CoefficientMap.from_grid(cmap, config)
    rings_needed = replaced_resolutions(config)
    if rings_needed and cmap.side != coefficient_side(config):
        raise ConfigError(f"coefficient side {cmap.side} != required {coefficient_side(config)}")
    if config.replace_const_input:
        if cmap.const_grid is None:
            raise PaddingMismatchError("config replaces the constant input but no const grid given")
        const = center_crop(cmap.const_grid, config.base_resolution)
    else:
        if native_const is None:
            raise PaddingMismatchError(
                "config keeps the native constant input; pass native_const"
            )
        batch = next(cmap.grids()).shape[0] if rings_needed else 1
        const = (
            native_const.unsqueeze(0).expand(batch, -1, -1, -1)
            if native_const.ndim == 3
            else native_const
        )
    rings = {}
    for n in rings_needed:
        if n not in cmap.ring_grids:
            raise PaddingMismatchError(f"coefficient map misses the grid for resolution {n}")
        rings[n] = extract_ring(center_crop(cmap.ring_grids[n], n + 2))
    extra = set(cmap.ring_grids) - set(rings_needed)
    if extra:
        raise PaddingMismatchError(f"coefficient map carries unreplaced resolutions {sorted(extra)}")
    return PaddingSet(const, rings)
