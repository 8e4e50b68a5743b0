"""Dataclass configs for the generator, encoder, losses, data and training.

Configs serialize to/from plain JSON (the CLI's config file format, versioned
via the top-level ``version`` key). Unknown keys are rejected on load and
dotted-key overrides are type-coerced against the target field.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

CONFIG_VERSION = 1

# Widest layer, schedule numerator and the two profile presets. The desk
# profile keeps every resolution at `latent_dim` channels so the coefficient
# map width matches the ring channels everywhere.
MAX_CHANNELS = 512
CHANNEL_BASE = 16384


def channel_schedule(resolutions: list[int], latent_dim: int) -> dict[int, int]:
    """Default channels per resolution: min(512, 16384/N) capped by latent_dim."""
    return {n: min(MAX_CHANNELS, CHANNEL_BASE // n, latent_dim) for n in resolutions}


@dataclass(frozen=True)
class GeneratorConfig:
    """Static shape of the style-based generator and its replaced-padding set.

    ``replaced_max_resolution`` is the largest resolution whose first conv
    reads an instance ring (None disables rings entirely);
    ``replace_const_input`` controls whether the constant input is adapted
    per image. Both together define the replaced set used for ablations.
    """

    base_resolution: int = 4
    max_resolution: int = 64
    latent_dim: int = 512
    channels: dict[int, int] | None = None
    replaced_max_resolution: int | None = 32
    replace_const_input: bool = True
    mapping_layers: int = 8
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.base_resolution < 1:
            raise ConfigError(f"base_resolution must be positive, got {self.base_resolution}")
        q, n = self.max_resolution, self.base_resolution
        while q > n and q % 2 == 0:
            q //= 2
        if q != n:
            raise ConfigError(
                f"max_resolution {self.max_resolution} is not base_resolution "
                f"{self.base_resolution} times a power of two"
            )
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.mapping_layers < 1:
            raise ConfigError("mapping_layers must be positive")
        p = self.replaced_max_resolution
        if p is not None and p not in self.resolutions:
            raise ConfigError(
                f"replaced_max_resolution {p} is not in the resolution ladder {self.resolutions}"
            )
        if self.channels is not None:
            missing = [n for n in self.resolutions if n not in self.channels]
            if missing:
                raise ConfigError(f"channels map misses resolutions {missing}")

    @property
    def resolutions(self) -> list[int]:
        """Resolution ladder from base to max, doubling each step."""
        out, n = [], self.base_resolution
        while n <= self.max_resolution:
            out.append(n)
            n *= 2
        return out

    @property
    def layer_count(self) -> int:
        """Two styled convs per resolution."""
        return 2 * len(self.resolutions)

    def channels_at(self, resolution: int) -> int:
        if self.channels is not None:
            return self.channels[resolution]
        return min(MAX_CHANNELS, CHANNEL_BASE // resolution, self.latent_dim)

    @classmethod
    def desk_profile(cls, latent_dim: int = 128, **kwargs) -> "GeneratorConfig":
        kwargs.setdefault("max_resolution", 64)
        kwargs.setdefault("mapping_layers", 4)
        return cls(latent_dim=latent_dim, **kwargs)

    @classmethod
    def full_profile(cls, **kwargs) -> "GeneratorConfig":
        kwargs.setdefault("max_resolution", 1024)
        kwargs.setdefault("latent_dim", 512)
        return cls(**kwargs)


def default_latent_split(layer_count: int) -> tuple[int, int, int]:
    """Codes per pyramid level (deepest, middle, finest).

    Keeps the deepest level at 3 codes and the middle at 4, with the
    remainder on the finest level; small ladders shrink front to back.
    """
    deep = min(3, layer_count)
    mid = min(4, layer_count - deep)
    return (deep, mid, layer_count - deep - mid)


@dataclass(frozen=True)
class EncoderConfig:
    """Residual backbone + FPN encoder shape.

    ``latent_split`` is (deep, mid, fine) style-code counts per pyramid
    level; None derives it from the generator layer count at build time.
    """

    input_resolution: int = 256
    conv1_channels: int = 64
    stage_depths: tuple[int, int, int, int] = (3, 4, 14, 3)
    stage_channels: tuple[int, int, int, int] = (64, 128, 256, 512)
    pyramid_dim: int = 512
    latent_split: tuple[int, int, int] | None = None
    padding_blocks: int = 2
    rng_seed: int = 1

    def __post_init__(self) -> None:
        if self.input_resolution < 16 or self.input_resolution % 16:
            raise ConfigError(
                f"input_resolution must be a positive multiple of 16, got {self.input_resolution}"
            )
        if len(self.stage_depths) != 4 or len(self.stage_channels) != 4:
            raise ConfigError("stage_depths and stage_channels must have 4 entries")
        if any(d < 1 for d in self.stage_depths):
            raise ConfigError("stage depths must be positive")
        if self.padding_blocks < 1:
            raise ConfigError("padding_blocks must be positive")

    def split_for(self, layer_count: int) -> tuple[int, int, int]:
        split = self.latent_split or default_latent_split(layer_count)
        if sum(split) != layer_count or any(s < 0 for s in split):
            raise ConfigError(
                f"latent_split {split} does not partition {layer_count} generator layers"
            )
        return split

    @classmethod
    def desk_profile(cls, **kwargs) -> "EncoderConfig":
        kwargs.setdefault("input_resolution", 64)
        kwargs.setdefault("conv1_channels", 32)
        kwargs.setdefault("stage_depths", (2, 2, 2, 2))
        kwargs.setdefault("stage_channels", (32, 64, 128, 128))
        kwargs.setdefault("pyramid_dim", 128)
        return cls(**kwargs)


@dataclass
class LossWeights:
    """Weights of the encoder objective plus gradient-penalty settings."""

    pixel: float = 1.0
    perceptual: float = 0.8
    identity: float = 0.0
    adversarial: float = 0.0
    regularization: float = 0.003
    gp_gamma: float = 10.0
    gp_squared: bool = False

    def __post_init__(self) -> None:
        for name in ("pixel", "perceptual", "identity", "adversarial", "regularization", "gp_gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be nonnegative")

    @classmethod
    def face(cls, **kwargs) -> "LossWeights":
        kwargs.setdefault("identity", 0.1)
        kwargs.setdefault("adversarial", 0.0)
        return cls(**kwargs)

    @classmethod
    def scene(cls, **kwargs) -> "LossWeights":
        kwargs.setdefault("adversarial", 0.03)
        kwargs.setdefault("identity", 0.0)
        return cls(**kwargs)

    @classmethod
    def synthetic(cls, **kwargs) -> "LossWeights":
        kwargs.setdefault("identity", 0.0)
        kwargs.setdefault("adversarial", 0.0)
        return cls(**kwargs)

    @classmethod
    def preset(cls, name: str, **kwargs) -> "LossWeights":
        try:
            return {"face": cls.face, "scene": cls.scene, "synthetic": cls.synthetic}[name](**kwargs)
        except KeyError:
            raise ConfigError(f"unknown loss preset {name!r}") from None


@dataclass(frozen=True)
class DatasetSpec:
    """Image source: a directory of image files or a synthetic generator name."""

    source: str = "shapes-64"
    resolution: int = 64
    image_count: int = 1400
    split_ratio: tuple[int, int] = (13, 1)
    seed: int = 7

    def __post_init__(self) -> None:
        if self.resolution < 4:
            raise ConfigError("resolution too small")
        if self.image_count < 2:
            raise ConfigError("image_count must be at least 2")
        a, b = self.split_ratio
        if a < 1 or b < 1:
            raise ConfigError("split_ratio parts must be positive")


@dataclass
class TrainConfig:
    """Knobs of the optimization loops; ``seed`` fixes all sampling."""

    data: DatasetSpec = field(default_factory=DatasetSpec)
    steps: int = 1000
    batch_size: int = 8
    lr_encoder: float = 1e-4
    lr_discriminator: float = 1e-4
    lr_generator: float = 2e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    gan_adam_betas: tuple[float, float] = (0.0, 0.99)
    preset: str = "synthetic"
    eval_every: int = 100
    eval_count: int = 64
    checkpoint_every: int = 0
    avg_latent_samples: int = 10000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if self.eval_every < 1 or self.eval_count < 1:
            raise ConfigError("eval cadence values must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if self.preset not in ("face", "scene", "synthetic"):
            raise ConfigError(f"unknown preset {self.preset!r}")


@dataclass
class ExperimentConfig:
    """Top-level bundle the CLI reads from a JSON file."""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig.desk_profile)
    encoder: EncoderConfig = field(default_factory=EncoderConfig.desk_profile)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    version: int = CONFIG_VERSION


# --- JSON (de)serialization -------------------------------------------------

_INT_KEY_DICTS = {"channels"}


def config_to_dict(cfg) -> dict:
    def convert(value):
        if dataclasses.is_dataclass(value):
            return {f.name: convert(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, dict):
            return {str(k): convert(v) for k, v in value.items()}
        if isinstance(value, (tuple, list)):
            return [convert(v) for v in value]
        return value

    return convert(cfg)


def _coerce(value, hint):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0])
    if origin is tuple:
        args = typing.get_args(hint)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0]) for v in value)
        if len(args) != len(value):
            raise ConfigError(f"expected {len(args)} entries, got {value!r}")
        return tuple(_coerce(v, a) for v, a in zip(value, args))
    if origin is dict:
        kt, vt = typing.get_args(hint)
        return {_coerce(k, kt): _coerce(v, vt) for k, v in value.items()}
    if hint is int:
        if isinstance(value, bool) or (isinstance(value, float) and value != int(value)):
            raise ConfigError(f"expected an integer, got {value!r}")
        return int(value)
    if hint is float:
        return float(value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}")
        return value
    if dataclasses.is_dataclass(hint):
        return config_from_dict(value, hint)
    return value


def config_from_dict(data: dict, cls):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object for {cls.__name__}, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(value, hints[key])
    return cls(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}, expected {CONFIG_VERSION}")
    cfg = config_from_dict(data, ExperimentConfig)
    return cfg


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.field=value`` overrides, returning a new config."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        node = data
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[key]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        try:
            node[keys[-1]] = json.loads(raw)
        except json.JSONDecodeError:
            node[keys[-1]] = raw  # bare strings allowed unquoted
    return config_from_dict(data, ExperimentConfig)
