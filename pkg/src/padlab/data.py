"""Image datasets: a procedural colored-shapes generator and directory
ingestion, plus deterministic split and batch streaming.

Images are float32 tensors of shape (3, R, R) in [-1, 1]. The batch stream is
a pure function of (seed, step): every epoch is an independent seeded
permutation, so runs resume and replay exactly.
"""

from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import DatasetSpec
from .errors import ConfigError
from .seeding import derive_seed

log = logging.getLogger(__name__)

SYNTHETIC_SOURCES = ("shapes-64",)


def split_counts(total: int, ratio: tuple[int, int] = (13, 1)) -> tuple[int, int]:
    """Train/test counts mirroring the ratio rule (13:1 -> 1300/100 of 1400)."""
    a, b = ratio
    train = total * a // (a + b)
    train = max(1, min(train, total - 1))
    return train, total - train


# --- synthetic shapes ---------------------------------------------------------


def _hsv(rng, v_lo=0.55) -> np.ndarray:
    h, s, v = rng.uniform(0, 1), rng.uniform(0.45, 1.0), rng.uniform(v_lo, 1.0)
    return np.array(colorsys.hsv_to_rgb(h, s, v), dtype=np.float32)


def shapes_image(index: int, seed: int, resolution: int) -> np.ndarray:
    """One colored-shapes scene, deterministic in (seed, index)."""
    rng = np.random.default_rng(derive_seed("shapes", seed, index))
    r = resolution
    yy, xx = np.meshgrid(np.linspace(0, 1, r), np.linspace(0, 1, r), indexing="ij")
    top, bottom = _hsv(rng, v_lo=0.25), _hsv(rng, v_lo=0.25)
    img = top[:, None, None] * (1 - yy) + bottom[:, None, None] * yy
    edge = 1.5 / r
    for _ in range(rng.integers(1, 4)):
        kind = rng.integers(0, 3)
        cx, cy = rng.uniform(0.18, 0.82, size=2)
        scale = rng.uniform(0.08, 0.26)
        if kind == 0:  # circle
            sd = scale - np.hypot(xx - cx, yy - cy)
        elif kind == 1:  # square
            sd = scale - np.maximum(np.abs(xx - cx), np.abs(yy - cy))
        else:  # ellipse
            ar = rng.uniform(0.4, 0.9)
            sd = scale - np.hypot((xx - cx) / 1.0, (yy - cy) / ar) * 1.0
        alpha = np.clip(sd / edge + 0.5, 0.0, 1.0).astype(np.float32)
        color = _hsv(rng)
        img = img * (1 - alpha) + color[:, None, None] * alpha
    return (img * 2 - 1).astype(np.float32)


# --- datasets -----------------------------------------------------------------


class SyntheticShapes:
    def __init__(self, count: int, resolution: int, seed: int):
        self.count = count
        self.resolution = resolution
        self.seed = seed
        self.skipped = 0

    def __len__(self) -> int:
        return self.count

    def image(self, i: int) -> np.ndarray:
        if not 0 <= i < self.count:
            raise IndexError(i)
        return shapes_image(i, self.seed, self.resolution)


class ImageFolder:
    """All readable image files of a directory, sorted by name; unreadable
    files are skipped (counted in ``skipped``) with a warning."""

    def __init__(self, root: str | Path, resolution: int):
        self.resolution = resolution
        root = Path(root)
        if not root.is_dir():
            raise ConfigError(f"dataset directory {root} does not exist")
        self.paths: list[Path] = []
        self.skipped = 0
        for p in sorted(root.iterdir()):
            if not p.is_file():
                continue
            try:
                with Image.open(p) as im:
                    im.verify()
            except Exception:
                self.skipped += 1
                log.warning("skipping unreadable image file %s", p)
                continue
            self.paths.append(p)
        if not self.paths:
            raise ConfigError(f"dataset directory {root} holds no readable images")

    def __len__(self) -> int:
        return len(self.paths)

    def image(self, i: int) -> np.ndarray:
        with Image.open(self.paths[i]) as im:
            im = im.convert("RGB")
            if im.size != (self.resolution, self.resolution):
                im = im.resize((self.resolution, self.resolution), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / 255.0
        return (arr.transpose(2, 0, 1) * 2 - 1).astype(np.float32)


@dataclass
class DataView:
    """A contiguous index window over a dataset, with an in-memory cache."""

    dataset: object
    start: int
    count: int

    def __post_init__(self) -> None:
        self._cache: dict[int, torch.Tensor] = {}

    def __len__(self) -> int:
        return self.count

    def tensor(self, i: int) -> torch.Tensor:
        if not 0 <= i < self.count:
            raise IndexError(i)
        hit = self._cache.get(i)
        if hit is None:
            hit = torch.from_numpy(self.dataset.image(self.start + i))
            self._cache[i] = hit
        return hit

    def batch(self, indices) -> torch.Tensor:
        return torch.stack([self.tensor(int(i)) for i in indices])

    def head(self, k: int) -> torch.Tensor:
        return self.batch(range(min(k, self.count)))


def load_dataset(spec: DatasetSpec) -> tuple[DataView, DataView]:
    """Build (train, test) views per the spec's source and split rule."""
    if spec.source in SYNTHETIC_SOURCES:
        ds = SyntheticShapes(spec.image_count, spec.resolution, spec.seed)
    elif spec.source.startswith("shapes"):
        raise ConfigError(f"unknown synthetic dataset {spec.source!r}; known: {SYNTHETIC_SOURCES}")
    else:
        ds = ImageFolder(spec.source, spec.resolution)
    n = len(ds)
    if n < 2:
        raise ConfigError("dataset must hold at least 2 images to split")
    train_n, test_n = split_counts(n, spec.split_ratio)
    return DataView(ds, 0, train_n), DataView(ds, train_n, test_n)


class BatchStream:
    """Seeded epoch-shuffled batches; ``batch(step)`` depends only on
    (seed, step), never on call order."""

    def __init__(self, view: DataView, batch_size: int, seed: int):
        if batch_size < 1:
            raise ConfigError("batch_size must be positive")
        self.view = view
        self.batch_size = batch_size
        self.seed = seed
        self._perm_cache: dict[int, np.ndarray] = {}

    def _perm(self, epoch: int) -> np.ndarray:
        perm = self._perm_cache.get(epoch)
        if perm is None:
            rng = np.random.default_rng(derive_seed("epoch", self.seed, epoch))
            perm = rng.permutation(len(self.view))
            if len(self._perm_cache) > 4:
                self._perm_cache.clear()
            self._perm_cache[epoch] = perm
        return perm

    def indices(self, step: int) -> list[int]:
        n = len(self.view)
        pos = step * self.batch_size
        return [int(self._perm((pos + k) // n)[(pos + k) % n]) for k in range(self.batch_size)]

    def batch(self, step: int) -> torch.Tensor:
        return self.view.batch(self.indices(step))


# --- image file helpers ---------------------------------------------------------


def tensor_to_uint8(img: torch.Tensor) -> np.ndarray:
    """(3, H, W) in [-1, 1] -> (H, W, 3) uint8."""
    arr = img.detach().clamp(-1, 1).add(1).mul(127.5).round().clamp(0, 255)
    return arr.to(torch.uint8).permute(1, 2, 0).cpu().numpy()


def save_image(img: torch.Tensor, path: str | Path) -> None:
    Image.fromarray(tensor_to_uint8(img)).save(path)


def load_image(path: str | Path, resolution: int | None = None) -> torch.Tensor:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if resolution is not None and im.size != (resolution, resolution):
            im = im.resize((resolution, resolution), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy(arr.transpose(2, 0, 1) * 2 - 1)
