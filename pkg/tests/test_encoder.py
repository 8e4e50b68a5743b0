"""Encoder contracts: pyramid shapes, head partition, cold-start neutrality."""

import pytest
import torch

from conftest import tiny_enc_config, tiny_gen_config

from padlab import Encoder, EncoderConfig, Generator, GeneratorConfig, padding_from
from padlab.config import default_latent_split
from padlab.errors import ConfigError, NumericError
from padlab.geometry import replaced_resolutions
from padlab.losses import pixel_loss


def _images(batch, resolution, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(batch, 3, resolution, resolution, generator=g) * 2 - 1


def test_pyramid_sides_quarter_eighth_sixteenth(encoder, enc_config):
    fine, mid, deep = encoder.backbone_features(_images(2, enc_config.input_resolution))
    r = enc_config.input_resolution
    assert fine.shape[-2:] == (r // 4, r // 4)
    assert mid.shape[-2:] == (r // 8, r // 8)
    assert deep.shape[-2:] == (r // 16, r // 16)
    assert fine.shape[1] == mid.shape[1] == deep.shape[1] == enc_config.pyramid_dim


def test_desk_profile_pyramid_sides():
    cfg = EncoderConfig.desk_profile()
    assert cfg.input_resolution == 64
    assert [cfg.input_resolution // s for s in (4, 8, 16)] == [16, 8, 4]


def test_latent_split_defaults():
    assert default_latent_split(18) == (3, 4, 11)
    assert default_latent_split(10) == (3, 4, 3)
    assert default_latent_split(6) == (3, 3, 0)
    assert default_latent_split(2) == (2, 0, 0)


def test_bad_latent_split_rejected():
    cfg = tiny_enc_config(latent_split=(3, 2, 2))  # sums to 7, generator has 6
    with pytest.raises(ConfigError):
        Encoder(cfg, tiny_gen_config())


def test_head_partition_covers_all_layers(encoder, gen_config):
    out = encoder(_images(2, encoder.config.input_resolution))
    assert out.w_plus.shape == (2, gen_config.layer_count, gen_config.latent_dim)
    assert len(encoder.styles) == gen_config.layer_count
    assert sum(encoder.latent_split) == gen_config.layer_count


def test_coefficient_map_side_contract(encoder, gen_config):
    out = encoder(_images(1, encoder.config.input_resolution))
    assert out.cmap.side == gen_config.replaced_max_resolution + 2
    assert sorted(out.cmap.ring_grids) == replaced_resolutions(gen_config)


@pytest.mark.parametrize("p_max", [4, 8, 16])
def test_coefficient_side_for_any_pmax(p_max):
    gcfg = tiny_gen_config(replaced_max_resolution=p_max)
    enc = Encoder(tiny_enc_config(), gcfg).eval()
    out = enc(_images(1, enc.config.input_resolution))
    assert out.cmap.side == p_max + 2


def test_encode_deterministic(encoder):
    img = _images(2, encoder.config.input_resolution, seed=5)
    a = encoder(img)
    b = encoder(img)
    assert torch.equal(a.w_plus, b.w_plus)
    assert torch.equal(a.cmap.const_grid, b.cmap.const_grid)


def test_encode_resizes_any_input(encoder):
    out = encoder(_images(1, 37))
    assert out.w_plus.shape[1] == encoder.gen_config.layer_count


def test_non_rgb_rejected(encoder):
    with pytest.raises(ConfigError):
        encoder(torch.zeros(1, 1, 16, 16))
    with pytest.raises(NumericError):
        bad = torch.zeros(1, 3, 16, 16)
        bad[0, 0, 0, 0] = float("nan")
        encoder(bad)


def test_cold_start_neutrality(gen_config, enc_config):
    """Zero-initialized padding heads start exactly at the native point, so a
    fresh encoder's joint pipeline equals the styles-only pipeline."""
    gen = Generator(gen_config).eval()
    enc = Encoder(enc_config, gen_config).eval()
    enc.padding.init_const_bias(gen.const_input)
    img = _images(2, enc_config.input_resolution, seed=9)
    with torch.no_grad():
        out = enc(img)
        padding = padding_from(out, gen)
        native = gen.default_padding(2)
        for a, b in zip(padding.tensors(), native.tensors()):
            assert torch.equal(a, b)
        joint = gen.synthesize(out.w_plus, padding)
        styles_only = gen.synthesize(out.w_plus, native)
    assert torch.equal(joint, styles_only)


def test_gradient_reaches_padding_heads(gen_config, enc_config):
    gen = Generator(gen_config).eval().requires_grad_(False)
    enc = Encoder(enc_config, gen_config).train()
    enc.padding.init_const_bias(gen.const_input)
    img = _images(2, enc_config.input_resolution, seed=10)
    out = enc(img)
    recon = gen.synthesize(out.w_plus, padding_from(out, gen))
    loss = pixel_loss(img, recon)
    loss.backward()
    assert enc.padding.head_const.weight.grad.abs().sum() > 0
    assert enc.padding.const_bias.grad.abs().sum() > 0
    for n in replaced_resolutions(gen_config):
        head = getattr(enc.padding, f"head_ring{n}")
        assert head.weight.grad.abs().sum() > 0
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in enc.backbone.parameters())


def test_finite_outputs_for_random_inputs(encoder):
    for seed in range(4):
        out = encoder(_images(3, encoder.config.input_resolution, seed=seed))
        assert torch.isfinite(out.w_plus).all()
        for g in out.cmap.grids():
            assert torch.isfinite(g).all()


def test_baseline_config_has_no_padding_branch():
    gcfg = tiny_gen_config(replaced_max_resolution=None, replace_const_input=False)
    enc = Encoder(tiny_enc_config(), gcfg).eval()
    out = enc(_images(1, enc.config.input_resolution))
    assert enc.padding is None
    assert out.cmap is None
    gen = Generator(gcfg).eval()
    ps = padding_from(out, gen)
    assert not ps.rings
    assert torch.equal(ps.const[0], gen.const_input.detach())


def test_const_only_config():
    gcfg = tiny_gen_config(replaced_max_resolution=None, replace_const_input=True)
    gen = Generator(gcfg).eval()
    enc = Encoder(tiny_enc_config(), gcfg).eval()
    enc.padding.init_const_bias(gen.const_input)
    out = enc(_images(1, enc.config.input_resolution))
    assert sorted(out.cmap.ring_grids) == []
    ps = padding_from(out, gen)
    assert not ps.rings
    assert torch.equal(ps.const[0], gen.const_input.detach())  # cold start


def test_style_offset_shifts_codes(encoder, gen_config):
    img = _images(1, encoder.config.input_resolution, seed=3)
    base = encoder(img).w_plus
    offset = torch.randn(gen_config.latent_dim, generator=torch.Generator().manual_seed(1))
    encoder.style_offset.copy_(offset)
    try:
        shifted = encoder(img).w_plus
    finally:
        encoder.style_offset.zero_()
    assert torch.allclose(shifted, base + offset, atol=1e-7)
