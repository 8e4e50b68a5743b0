"""Named-array checkpoint archives.

A checkpoint is a directory holding ``arrays.npz`` (named numeric arrays,
names use '/' separators, e.g. ``gen/res8/conv0/weight``, ``map/fc0/weight``,
``enc/...``, ``disc/...``) plus a plain-text ``manifest.json`` with the
format version, checkpoint kind, a config echo and an array name -> shape
index. Arrays round-trip bit-exactly; optimizer moments may be included so a
resumed run continues bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
from torch import nn

from .config import EncoderConfig, GeneratorConfig, config_from_dict, config_to_dict
from .discriminator import Discriminator
from .encoder import Encoder
from .errors import ConfigError
from .generator import Generator

FORMAT_VERSION = 1
ARRAYS_NAME = "arrays.npz"
MANIFEST_NAME = "manifest.json"


def save_archive(path: str | Path, arrays: Mapping[str, np.ndarray], manifest: dict) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.savez(path / ARRAYS_NAME, **{k: np.asarray(v) for k, v in arrays.items()})
    full = {
        "format_version": FORMAT_VERSION,
        **manifest,
        "arrays": {
            k: {"shape": list(np.asarray(v).shape), "dtype": str(np.asarray(v).dtype)}
            for k, v in sorted(arrays.items())
        },
    }
    (path / MANIFEST_NAME).write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
    return path


def load_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not (path / MANIFEST_NAME).is_file():
        raise ConfigError(f"{path} is not a checkpoint directory (no {MANIFEST_NAME})")
    manifest = json.loads((path / MANIFEST_NAME).read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {version}")
    with np.load(path / ARRAYS_NAME) as data:
        arrays = {k: data[k].copy() for k in data.files}
    declared = set(manifest.get("arrays", {}))
    if declared and declared != set(arrays):
        raise ConfigError(f"manifest and archive disagree on array names in {path}")
    return arrays, manifest


# --- module <-> named arrays -------------------------------------------------


def module_arrays(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """State dict as named arrays: dots become slashes under ``prefix/``."""
    out = {}
    for key, value in module.state_dict().items():
        out[f"{prefix}/{key.replace('.', '/')}"] = value.detach().cpu().numpy()
    return out


def load_module_arrays(module: nn.Module, arrays: Mapping[str, np.ndarray], prefix: str) -> None:
    state = {}
    lead = f"{prefix}/"
    for name, value in arrays.items():
        if name.startswith(lead):
            state[name[len(lead):].replace("/", ".")] = torch.from_numpy(np.array(value))
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ConfigError(f"checkpoint arrays do not match module under {prefix!r}: {exc}") from exc


def adam_arrays(opt: torch.optim.Optimizer, prefix: str) -> dict[str, np.ndarray]:
    """Adam moments and step counters, indexed by flat parameter position."""
    out = {}
    state = opt.state_dict()["state"]
    for idx, entry in state.items():
        for key, value in entry.items():
            v = value.detach().cpu().numpy() if torch.is_tensor(value) else np.asarray(value)
            out[f"{prefix}/{idx}/{key}"] = v
    return out


def load_adam_arrays(opt: torch.optim.Optimizer, arrays: Mapping[str, np.ndarray], prefix: str) -> None:
    sd = opt.state_dict()
    state: dict[int, dict] = {}
    lead = f"{prefix}/"
    for name, value in arrays.items():
        if not name.startswith(lead):
            continue
        idx_str, key = name[len(lead):].split("/", 1)
        entry = state.setdefault(int(idx_str), {})
        tensor = torch.from_numpy(np.array(value))
        entry[key] = tensor if tensor.ndim else tensor.clone()
    if state:
        sd["state"] = state
        opt.load_state_dict(sd)


# --- bundled checkpoints ------------------------------------------------------


def save_gan_checkpoint(
    path: str | Path,
    generator: Generator,
    discriminator: Discriminator | None = None,
    *,
    step: int | None = None,
    optimizers: Mapping[str, torch.optim.Optimizer] | None = None,
    extra: dict | None = None,
) -> Path:
    arrays = module_arrays(generator.mapping, "map")
    arrays.update(module_arrays(generator.synthesis, "gen"))
    arrays["gen/w_avg"] = generator.w_avg.detach().cpu().numpy()
    if discriminator is not None:
        arrays.update(module_arrays(discriminator, "disc"))
    for name, opt in (optimizers or {}).items():
        arrays.update(adam_arrays(opt, f"opt/{name}"))
    manifest = {
        "kind": "gan",
        "config": {"generator": config_to_dict(generator.config)},
        "step": step,
    }
    if extra:
        manifest.update(extra)
    return save_archive(path, arrays, manifest)


def load_gan_checkpoint(
    path: str | Path, *, with_discriminator: bool = False
) -> tuple[Generator, Discriminator | None, dict]:
    arrays, manifest = load_archive(path)
    if manifest.get("kind") != "gan":
        raise ConfigError(f"{path} is a {manifest.get('kind')!r} checkpoint, expected 'gan'")
    gen_config = config_from_dict(manifest["config"]["generator"], GeneratorConfig)
    generator = Generator(gen_config)
    load_module_arrays(generator.mapping, arrays, "map")
    w_avg = arrays.pop("gen/w_avg")
    load_module_arrays(generator.synthesis, arrays, "gen")
    with torch.no_grad():
        generator.w_avg.copy_(torch.from_numpy(w_avg))
    generator.eval()
    discriminator = None
    if with_discriminator:
        if not any(k.startswith("disc/") for k in arrays):
            raise ConfigError(f"{path} holds no discriminator arrays")
        discriminator = Discriminator(gen_config)
        load_module_arrays(discriminator, arrays, "disc")
    return generator, discriminator, manifest


def save_encoder_checkpoint(
    path: str | Path,
    encoder: Encoder,
    *,
    step: int | None = None,
    optimizers: Mapping[str, torch.optim.Optimizer] | None = None,
    extra: dict | None = None,
) -> Path:
    arrays = module_arrays(encoder, "enc")
    for name, opt in (optimizers or {}).items():
        arrays.update(adam_arrays(opt, f"opt/{name}"))
    manifest = {
        "kind": "encoder",
        "config": {
            "encoder": config_to_dict(encoder.config),
            "generator": config_to_dict(encoder.gen_config),
        },
        "step": step,
    }
    if extra:
        manifest.update(extra)
    return save_archive(path, arrays, manifest)


def load_encoder_checkpoint(path: str | Path) -> tuple[Encoder, dict]:
    arrays, manifest = load_archive(path)
    if manifest.get("kind") != "encoder":
        raise ConfigError(f"{path} is a {manifest.get('kind')!r} checkpoint, expected 'encoder'")
    enc_config = config_from_dict(manifest["config"]["encoder"], EncoderConfig)
    gen_config = config_from_dict(manifest["config"]["generator"], GeneratorConfig)
    encoder = Encoder(enc_config, gen_config)
    load_module_arrays(encoder, arrays, "enc")
    encoder.eval()
    return encoder, manifest
