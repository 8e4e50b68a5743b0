"""Dataset determinism, splits and the seeded batch stream."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from padlab import DatasetSpec
from padlab.data import (
    BatchStream,
    ImageFolder,
    load_dataset,
    load_image,
    save_image,
    shapes_image,
    split_counts,
)
from padlab.errors import ConfigError


def test_split_rule_mirrors_thirteen_to_one():
    assert split_counts(1400) == (1300, 100)
    assert split_counts(140) == (130, 10)
    assert split_counts(14) == (13, 1)


@given(st.integers(min_value=2, max_value=100_000))
def test_split_disjoint_and_exhaustive(n):
    train, test = split_counts(n)
    assert train >= 1 and test >= 1
    assert train + test == n


def test_shapes_image_deterministic():
    a = shapes_image(3, seed=7, resolution=64)
    b = shapes_image(3, seed=7, resolution=64)
    assert np.array_equal(a, b)
    c = shapes_image(3, seed=8, resolution=64)
    assert not np.array_equal(a, c)


def test_shapes_image_range_and_shape():
    img = shapes_image(0, seed=1, resolution=64)
    assert img.shape == (3, 64, 64)
    assert img.dtype == np.float32
    assert img.min() >= -1.0 and img.max() <= 1.0


def test_shapes_images_vary_across_indices():
    imgs = [shapes_image(i, seed=7, resolution=32) for i in range(6)]
    assert len({im.tobytes() for im in imgs}) == 6


def test_seeded_stream_identical_twice():
    spec = DatasetSpec(source="shapes-64", resolution=32, image_count=60, seed=7)
    train, _ = load_dataset(spec)
    s1 = BatchStream(train, batch_size=4, seed=7)
    s2 = BatchStream(train, batch_size=4, seed=7)
    for step in range(6):
        assert torch.equal(s1.batch(step), s2.batch(step))


def test_stream_is_pure_function_of_step():
    spec = DatasetSpec(source="shapes-64", resolution=32, image_count=50, seed=3)
    train, _ = load_dataset(spec)
    s = BatchStream(train, batch_size=4, seed=1)
    later = s.batch(9)
    earlier = s.batch(2)
    fresh = BatchStream(train, batch_size=4, seed=1)
    assert torch.equal(fresh.batch(2), earlier)
    assert torch.equal(fresh.batch(9), later)


def test_stream_covers_each_epoch_once():
    spec = DatasetSpec(source="shapes-64", resolution=16, image_count=20, seed=3)
    train, _ = load_dataset(spec)
    n = len(train)
    s = BatchStream(train, batch_size=3, seed=5)
    seen = [i for step in range((2 * n) // 3) for i in s.indices(step)]
    first_epoch = seen[:n]
    assert sorted(first_epoch) == list(range(n))
    second_epoch = seen[n : 2 * n]
    assert sorted(second_epoch) == list(range(n))
    assert first_epoch != second_epoch  # reshuffled between epochs


def test_unknown_synthetic_source_rejected():
    with pytest.raises(ConfigError):
        load_dataset(DatasetSpec(source="shapes-128x"))


def test_directory_dataset_skips_junk(tmp_path):
    for i in range(5):
        arr = (np.random.default_rng(i).random((16, 16, 3)) * 255).astype(np.uint8)
        Image.fromarray(arr).save(tmp_path / f"img_{i}.png")
    (tmp_path / "notes.txt").write_text("not an image")
    ds = ImageFolder(tmp_path, resolution=16)
    assert len(ds) == 5
    assert ds.skipped == 1
    img = ds.image(0)
    assert img.shape == (3, 16, 16)
    assert img.min() >= -1.0 and img.max() <= 1.0


def test_empty_directory_fatal(tmp_path):
    (tmp_path / "junk.bin").write_bytes(b"\x00\x01")
    with pytest.raises(ConfigError):
        ImageFolder(tmp_path, resolution=16)


def test_directory_split_uses_file_count(tmp_path):
    for i in range(14):
        Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / f"{i:02d}.png")
    spec = DatasetSpec(source=str(tmp_path), resolution=8)
    train, test = load_dataset(spec)
    assert (len(train), len(test)) == (13, 1)


def test_image_file_round_trip(tmp_path):
    img = torch.from_numpy(shapes_image(1, seed=2, resolution=32))
    save_image(img, tmp_path / "img.png")
    back = load_image(tmp_path / "img.png")
    assert back.shape == img.shape
    # 8-bit quantization bounds the error by half a bucket
    assert (back - img).abs().max() <= (1 / 127.5)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_shapes_finite_everywhere(index):
    img = shapes_image(index, seed=11, resolution=16)
    assert np.isfinite(img).all()
