"""Editing toolkit: inversion, blending, dual-space interpolation, one-pair
edit directions and the masked-MSE editing factor.

Style codes and paddings are carried, never re-encoded: blending and editing
recombine the stored codes, so the algebra below is exact (strength-0 and
endpoint identities hold bitwise on the code level).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import Tensor

from .checkpoint import load_archive, save_archive
from .data import save_image, tensor_to_uint8
from .encoder import Encoder, padding_from
from .errors import ConfigError
from .generator import Generator
from .geometry import PaddingSet

SPACES = ("style", "padding")


@dataclass
class InversionResult:
    """Joint inversion of one image: (L, d) style codes, a batch-1 padding
    set, and the reconstruction those codes synthesize."""

    w_plus: Tensor
    padding: PaddingSet
    reconstruction: Tensor
    source_id: str = ""

    def save(self, path: str | Path) -> Path:
        arrays = {
            "w_plus": self.w_plus.detach().cpu().numpy(),
            "const": self.padding.const.detach().cpu().numpy(),
            "reconstruction": self.reconstruction.detach().cpu().numpy(),
        }
        for n, ring in self.padding.rings.items():
            arrays[f"ring{n}"] = ring.detach().cpu().numpy()
        path = save_archive(path, arrays, {"kind": "inversion", "source_id": self.source_id})
        save_image(self.reconstruction, Path(path) / "reconstruction.png")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "InversionResult":
        arrays, manifest = load_archive(path)
        if manifest.get("kind") != "inversion":
            raise ConfigError(f"{path} is a {manifest.get('kind')!r} archive, expected 'inversion'")
        rings = {
            int(name[4:]): torch.from_numpy(arr)
            for name, arr in arrays.items()
            if name.startswith("ring")
        }
        return cls(
            w_plus=torch.from_numpy(arrays["w_plus"]),
            padding=PaddingSet(torch.from_numpy(arrays["const"]), rings),
            reconstruction=torch.from_numpy(arrays["reconstruction"]),
            source_id=manifest.get("source_id", ""),
        )


@dataclass
class EditDirection:
    """Paired deltas of one customized image pair: a style delta in W+ and a
    padding-shaped delta."""

    style_delta: Tensor
    padding_delta: PaddingSet
    label: str = ""

    def __neg__(self) -> "EditDirection":
        return EditDirection(-self.style_delta, -self.padding_delta, self.label)

    def save(self, path: str | Path) -> Path:
        arrays = {
            "style_delta": self.style_delta.detach().cpu().numpy(),
            "const": self.padding_delta.const.detach().cpu().numpy(),
        }
        for n, ring in self.padding_delta.rings.items():
            arrays[f"ring{n}"] = ring.detach().cpu().numpy()
        return save_archive(path, arrays, {"kind": "direction", "label": self.label})

    @classmethod
    def load(cls, path: str | Path) -> "EditDirection":
        arrays, manifest = load_archive(path)
        if manifest.get("kind") != "direction":
            raise ConfigError(f"{path} is a {manifest.get('kind')!r} archive, expected 'direction'")
        rings = {
            int(name[4:]): torch.from_numpy(arr)
            for name, arr in arrays.items()
            if name.startswith("ring")
        }
        return cls(
            style_delta=torch.from_numpy(arrays["style_delta"]),
            padding_delta=PaddingSet(torch.from_numpy(arrays["const"]), rings),
            label=manifest.get("label", ""),
        )


def invert(image: Tensor, encoder: Encoder, generator: Generator, source_id: str = "") -> InversionResult:
    """Encode an image and synthesize its reconstruction."""
    encoder.eval()
    with torch.no_grad():
        out = encoder(image)
        padding = padding_from(out, generator)
        w_plus = out.w_plus.squeeze(0)
        recon = generator.synthesize(w_plus, padding)
    return InversionResult(w_plus, padding, recon, source_id)


def _check_compatible(a: InversionResult, b: InversionResult) -> None:
    if a.w_plus.shape != b.w_plus.shape or sorted(a.padding.rings) != sorted(b.padding.rings):
        raise ConfigError("inversion results come from incompatible configs")


def blend(generator: Generator, a: InversionResult, b: InversionResult) -> Tensor:
    """Style codes of A rendered with the padding of B."""
    _check_compatible(a, b)
    with torch.no_grad():
        return generator.synthesize(a.w_plus, b.padding)


def interpolate_latent(generator: Generator, a: InversionResult, b: InversionResult, alpha: float) -> Tensor:
    """Linear path in W+ with the padding held at A's value."""
    _check_alpha(alpha)
    _check_compatible(a, b)
    w = (1.0 - alpha) * a.w_plus + alpha * b.w_plus
    with torch.no_grad():
        return generator.synthesize(w, a.padding)


def interpolate_padding(generator: Generator, a: InversionResult, b: InversionResult, alpha: float) -> Tensor:
    """Linear path in padding space with the style codes held at A's value.

    Passing ``average_inversion(generator)`` as A reproduces the
    average-image study: codes fixed at the average vector, padding moving
    from the native constants to B's."""
    _check_alpha(alpha)
    _check_compatible(a, b)
    p = a.padding.lerp(b.padding, alpha)
    with torch.no_grad():
        return generator.synthesize(a.w_plus, p)


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")


def average_inversion(generator: Generator) -> InversionResult:
    """The generator's native operating point: average codes, native padding."""
    w = generator.average_wplus()
    padding = generator.default_padding(1)
    with torch.no_grad():
        recon = generator.synthesize(w, padding)
    return InversionResult(w, padding, recon, source_id="average")


def direction_between(a: InversionResult, b: InversionResult, label: str = "") -> EditDirection:
    """Edit direction from inversion A to inversion B (code-level deltas)."""
    _check_compatible(a, b)
    return EditDirection(b.w_plus - a.w_plus, b.padding - a.padding, label)


def make_direction(
    image_a: Tensor,
    image_b: Tensor,
    encoder: Encoder,
    generator: Generator,
    label: str = "",
) -> EditDirection:
    """Invert a customized (before, after) pair and take its deltas."""
    inv_a = invert(image_a, encoder, generator, "pair_a")
    inv_b = invert(image_b, encoder, generator, "pair_b")
    return direction_between(inv_a, inv_b, label)


def apply_direction(
    generator: Generator,
    inv: InversionResult,
    direction: EditDirection,
    strength: float,
    space: str,
) -> Tensor:
    """Move the inversion along the direction in exactly one space."""
    if space not in SPACES:
        raise ConfigError(f"unknown space {space!r}; expected one of {SPACES}")
    with torch.no_grad():
        if space == "style":
            return generator.synthesize(inv.w_plus + strength * direction.style_delta, inv.padding)
        return generator.synthesize(inv.w_plus, inv.padding + strength * direction.padding_delta)


# --- masked evaluation ---------------------------------------------------------


def edited_region_mask(a: Tensor, b: Tensor, threshold: float = 0.1, dilation: int = 2) -> Tensor:
    """Pixels where the pair differs by more than ``threshold`` (in [-1, 1]
    units, any channel), dilated by ``dilation`` pixels: (H, W) bool."""
    if a.shape != b.shape:
        raise ConfigError("pair images must share a shape")
    changed = ((a - b).abs().amax(dim=0) > threshold).float()
    if dilation > 0:
        k = 2 * dilation + 1
        changed = F.max_pool2d(changed.unsqueeze(0).unsqueeze(0), k, 1, dilation).squeeze()
    return changed > 0.5


def non_edited_mask(a: Tensor, b: Tensor, threshold: float = 0.1, dilation: int = 2) -> Tensor:
    """Complement of the dilated edited region."""
    return ~edited_region_mask(a, b, threshold, dilation)


def non_edited_mse(recon: Tensor, edited: Tensor, mask: Tensor) -> float:
    """Mean squared pixel difference restricted to the masked region."""
    if recon.shape != edited.shape:
        raise ConfigError("images must share a shape")
    if mask.dtype != torch.bool:
        mask = mask > 0.5
    if mask.shape != recon.shape[-2:]:
        raise ConfigError(f"mask shape {tuple(mask.shape)} != image plane {tuple(recon.shape[-2:])}")
    if not mask.any():
        raise ConfigError("mask selects no pixels")
    diff = (recon - edited).pow(2)
    return diff[:, mask].mean().item()


def editing_factor(
    generator: Generator,
    inversions: list[InversionResult],
    direction: EditDirection,
    mask: Tensor,
    strength: float = 1.0,
) -> tuple[float, float, float]:
    """Non-edited-region MSE of the padding-space and style-space edits over
    a sample set, plus their ratio (padding : style)."""
    if not inversions:
        raise ConfigError("editing_factor needs at least one inversion")
    mse_p, mse_s = 0.0, 0.0
    for inv in inversions:
        edited_p = apply_direction(generator, inv, direction, strength, "padding")
        edited_s = apply_direction(generator, inv, direction, strength, "style")
        mse_p += non_edited_mse(inv.reconstruction, edited_p, mask)
        mse_s += non_edited_mse(inv.reconstruction, edited_s, mask)
    mse_p /= len(inversions)
    mse_s /= len(inversions)
    factor = math.inf if mse_s == 0 else mse_p / mse_s
    return mse_p, mse_s, factor


def format_factor(mse_p: float, mse_s: float) -> str:
    """Human-readable ratio, larger side first: '12.89:1' or '1:13.73'."""
    if mse_s == 0:
        return "inf:1"
    if mse_p == 0:
        return "1:inf"
    ratio = mse_p / mse_s
    return f"{ratio:.2f}:1" if ratio >= 1 else f"1:{1 / ratio:.2f}"


# --- grid export -----------------------------------------------------------------


def export_grid(
    images: list[Tensor],
    path: str | Path,
    cols: int | None = None,
    gap: int = 2,
) -> Path:
    """Tile images into one PNG (inputs, reconstructions, edits side by side)."""
    if not images:
        raise ConfigError("export_grid needs at least one image")
    shapes = {tuple(im.shape) for im in images}
    if len(shapes) > 1:
        raise ConfigError(f"grid images disagree on shape: {sorted(shapes)}")
    h, w = images[0].shape[-2:]
    cols = cols or math.ceil(math.sqrt(len(images)))
    rows = math.ceil(len(images) / cols)
    canvas = np.full((rows * h + gap * (rows - 1), cols * w + gap * (cols - 1), 3), 255, np.uint8)
    for i, im in enumerate(images):
        r, c = divmod(i, cols)
        y, x = r * (h + gap), c * (w + gap)
        canvas[y : y + h, x : x + w] = tensor_to_uint8(im)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas).save(path)
    return path
