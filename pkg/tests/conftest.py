import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from padlab import EncoderConfig, Encoder, Generator, GeneratorConfig

torch.set_num_threads(1)


def tiny_gen_config(**kwargs) -> GeneratorConfig:
    kwargs.setdefault("max_resolution", 16)
    kwargs.setdefault("latent_dim", 24)
    kwargs.setdefault("replaced_max_resolution", 8)
    kwargs.setdefault("mapping_layers", 2)
    return GeneratorConfig(**kwargs)


def tiny_enc_config(**kwargs) -> EncoderConfig:
    kwargs.setdefault("input_resolution", 16)
    kwargs.setdefault("conv1_channels", 8)
    kwargs.setdefault("stage_depths", (1, 1, 1, 1))
    kwargs.setdefault("stage_channels", (8, 12, 16, 24))
    kwargs.setdefault("pyramid_dim", 24)
    return EncoderConfig(**kwargs)


@pytest.fixture(scope="session")
def gen_config() -> GeneratorConfig:
    return tiny_gen_config()


@pytest.fixture(scope="session")
def generator(gen_config) -> Generator:
    return Generator(gen_config).eval().requires_grad_(False)


@pytest.fixture(scope="session")
def enc_config() -> EncoderConfig:
    return tiny_enc_config()


@pytest.fixture(scope="session")
def encoder(enc_config, gen_config, generator) -> Encoder:
    enc = Encoder(enc_config, gen_config)
    enc.padding.init_const_bias(generator.const_input)
    return enc.eval().requires_grad_(False)
