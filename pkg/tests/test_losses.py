"""Objective values and gradient fidelity against finite differences."""

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch import nn

from helpers import autograd_gradient, fd_gradient, relative_error

from padlab import LossWeights
from padlab.errors import ConfigError, NumericError
from padlab.losses import (
    LossParts,
    RandomEmbedder,
    RandomFeaturePyramid,
    adversarial_loss_encoder,
    discriminator_loss,
    gradient_penalty,
    identity_loss,
    perceptual_loss,
    pixel_loss,
    regularization_loss,
    total_encoder_loss,
)

FD_TOL = 1e-3


class TinyCritic(nn.Module):
    """Small smooth critic for gradient checks."""

    def __init__(self, numel, seed=0):
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.fc1 = nn.Linear(numel, 16)
            self.fc2 = nn.Linear(16, 1)

    def forward(self, x):
        return self.fc2(torch.tanh(self.fc1(x.flatten(1)))).squeeze(1)


def _pair(seed=0, shape=(2, 3, 8, 8), dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(*shape, generator=g, dtype=dtype) * 2 - 1
    y = torch.rand(*shape, generator=g, dtype=dtype) * 2 - 1
    return x, y


# --- pixel -----------------------------------------------------------------------


def test_pixel_zero_at_identity():
    x, _ = _pair()
    assert pixel_loss(x, x).item() == 0.0


def test_pixel_unit_rms():
    x = torch.zeros(1, 3, 4, 4)
    y = torch.ones(1, 3, 4, 4)
    assert pixel_loss(x, y).item() == pytest.approx(1.0)


def test_pixel_symmetric():
    x, y = _pair(1)
    assert pixel_loss(x, y).item() == pytest.approx(pixel_loss(y, x).item())


def test_pixel_shape_mismatch():
    with pytest.raises(ConfigError):
        pixel_loss(torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 4, 4))


def test_pixel_gradient_matches_fd():
    x, y = _pair(2, shape=(1, 3, 8, 8))
    fn = lambda t: pixel_loss(x, t)
    assert relative_error(autograd_gradient(fn, y), fd_gradient(fn, y)) < FD_TOL


# --- perceptual ------------------------------------------------------------------


def test_perceptual_zero_at_identity():
    x, _ = _pair(3)
    phi = RandomFeaturePyramid().double()
    assert perceptual_loss(x, x, phi).item() == 0.0


def test_perceptual_endpoint_monotonicity():
    x, y = _pair(4)
    phi = RandomFeaturePyramid().double()
    at_far = perceptual_loss(x, y, phi).item()
    at_target = perceptual_loss(x, (1 - 1.0) * y + 1.0 * x, phi).item()
    assert at_target == 0.0 <= at_far


def test_perceptual_gradient_matches_fd():
    x, y = _pair(5, shape=(1, 3, 8, 8))
    phi = RandomFeaturePyramid().double()
    fn = lambda t: perceptual_loss(x, t, phi)
    assert relative_error(autograd_gradient(fn, y), fd_gradient(fn, y)) < FD_TOL


# --- identity --------------------------------------------------------------------


def test_identity_zero_at_equal_embeddings():
    x, _ = _pair(6)
    psi = RandomEmbedder().double()
    assert identity_loss(x, x, psi).item() == pytest.approx(0.0, abs=1e-9)


def test_identity_two_at_opposite_embeddings():
    calls = iter([torch.tensor([[1.0, 0.0]]), torch.tensor([[-1.0, 0.0]])])
    psi = lambda img: next(calls)
    x = torch.zeros(1, 3, 4, 4)
    assert identity_loss(x, x, psi).item() == pytest.approx(2.0)


def test_identity_one_at_orthogonal_embeddings():
    calls = iter([torch.tensor([[1.0, 0.0]]), torch.tensor([[0.0, 1.0]])])
    psi = lambda img: next(calls)
    x = torch.zeros(1, 3, 4, 4)
    assert identity_loss(x, x, psi).item() == pytest.approx(1.0)


def test_identity_zero_norm_raises():
    psi = lambda img: torch.zeros(1, 4)
    with pytest.raises(NumericError):
        identity_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4), psi)


def test_identity_range_and_gradient():
    x, y = _pair(7, shape=(1, 3, 8, 8))
    psi = RandomEmbedder().double()
    value = identity_loss(x, y, psi).item()
    assert 0.0 <= value <= 2.0
    fn = lambda t: identity_loss(x, t, psi)
    assert relative_error(autograd_gradient(fn, y), fd_gradient(fn, y)) < FD_TOL


# --- adversarial -----------------------------------------------------------------


def test_adversarial_constant_critic():
    disc = lambda x: torch.full((x.shape[0],), 1.7)
    x = torch.zeros(4, 3, 8, 8)
    assert adversarial_loss_encoder(disc, x).item() == pytest.approx(-1.7)


def test_adversarial_duplication_invariance():
    disc = TinyCritic(3 * 8 * 8).double()
    x, _ = _pair(8)
    doubled = torch.cat([x, x])
    a = adversarial_loss_encoder(disc, x).item()
    b = adversarial_loss_encoder(disc, doubled).item()
    assert a == pytest.approx(b, rel=1e-12)


def test_adversarial_gradient_matches_fd():
    disc = TinyCritic(3 * 8 * 8).double()
    x, _ = _pair(9, shape=(1, 3, 8, 8))
    fn = lambda t: adversarial_loss_encoder(disc, t)
    assert relative_error(autograd_gradient(fn, x), fd_gradient(fn, x)) < FD_TOL


# --- regularization ---------------------------------------------------------------


def test_regularization_zero_at_average():
    w_avg = torch.randn(6, dtype=torch.float64)
    w = w_avg.repeat(5, 1)
    assert regularization_loss(w, w_avg).item() == 0.0


def test_regularization_single_row_norm():
    v = torch.tensor([[3.0, 4.0]])
    assert regularization_loss(v, torch.zeros(2)).item() == pytest.approx(5.0)


def test_regularization_homogeneity():
    w_avg = torch.randn(6, dtype=torch.float64)
    w = torch.randn(4, 6, dtype=torch.float64)
    base = regularization_loss(w, w_avg).item()
    doubled = regularization_loss(w_avg + 2 * (w - w_avg), w_avg).item()
    assert doubled == pytest.approx(2 * base, rel=1e-9)


def test_regularization_gradient_matches_fd():
    w_avg = torch.randn(6, dtype=torch.float64)
    w = torch.randn(1, 4, 6, dtype=torch.float64)
    fn = lambda t: regularization_loss(t, w_avg)
    assert relative_error(autograd_gradient(fn, w), fd_gradient(fn, w)) < FD_TOL


# --- total ------------------------------------------------------------------------


def test_total_zero_weights():
    weights = LossWeights(pixel=0, perceptual=0, identity=0, adversarial=0, regularization=0)
    parts = LossParts(pixel=torch.tensor(1.0), perceptual=torch.tensor(2.0))
    assert total_encoder_loss(parts, weights).item() == 0.0


def test_total_linearity():
    weights = LossWeights(pixel=1.0, perceptual=0.8, identity=0.1, adversarial=0.03, regularization=0.003)
    parts = LossParts(*(torch.tensor(float(i)) for i in range(1, 6)))
    expected = 1.0 * 1 + 0.8 * 2 + 0.1 * 3 + 0.03 * 4 + 0.003 * 5
    assert total_encoder_loss(parts, weights).item() == pytest.approx(expected)
    bumped = LossParts(torch.tensor(2.0), *(torch.tensor(float(i)) for i in range(2, 6)))
    assert total_encoder_loss(bumped, weights).item() == pytest.approx(expected + 1.0)


def test_default_weights_and_presets():
    w = LossWeights()
    assert (w.pixel, w.perceptual, w.regularization, w.gp_gamma) == (1.0, 0.8, 0.003, 10.0)
    face = LossWeights.face()
    assert face.identity == 0.1 and face.adversarial == 0.0
    scene = LossWeights.scene()
    assert scene.adversarial == 0.03 and scene.identity == 0.0
    for preset in (face, scene, LossWeights.synthetic()):
        assert not (preset.identity > 0 and preset.adversarial > 0)


def test_negative_weight_rejected():
    with pytest.raises(ConfigError):
        LossWeights(pixel=-1.0)


# --- discriminator ----------------------------------------------------------------


def test_discriminator_zero_critic():
    disc = lambda x: torch.zeros(x.shape[0], requires_grad=True) * x.sum()
    x, y = _pair(10)

    class Zero(nn.Module):
        def forward(self, t):
            return (t * 0.0).flatten(1).sum(dim=1)

    assert discriminator_loss(Zero(), x, y, gamma=10.0).item() == 0.0


def test_linear_critic_penalty_analytic():
    a = torch.randn(3 * 8 * 8, dtype=torch.float64)

    class LinearCritic(nn.Module):
        def forward(self, t):
            return t.flatten(1) @ a

    x, y = _pair(11)
    gamma = 10.0
    loss = discriminator_loss(LinearCritic(), x, y, gamma=gamma)
    score_diff = (y.flatten(1) @ a).mean() - (x.flatten(1) @ a).mean()
    penalty = loss - score_diff
    assert abs(penalty.item() - 0.5 * gamma * a.norm().item()) < 1e-6
    squared = discriminator_loss(LinearCritic(), x, y, gamma=gamma, squared=True)
    assert abs((squared - score_diff).item() - 0.5 * gamma * a.norm().item() ** 2) < 1e-6


def test_gamma_zero_reduces_to_score_difference():
    disc = TinyCritic(3 * 8 * 8).double()
    x, y = _pair(12)
    loss = discriminator_loss(disc, x, y, gamma=0.0)
    expected = disc(y).mean() - disc(x).mean()
    assert loss.item() == pytest.approx(expected.item(), rel=1e-12)


def test_discriminator_gradient_matches_fd_wrt_fake():
    disc = TinyCritic(3 * 8 * 8).double()
    x, y = _pair(13, shape=(1, 3, 8, 8))
    fn = lambda t: discriminator_loss(disc, x, t, gamma=10.0)
    assert relative_error(autograd_gradient(fn, y), fd_gradient(fn, y)) < FD_TOL


def test_discriminator_gradient_matches_fd_wrt_real():
    # includes the double-backward path through the gradient penalty
    disc = TinyCritic(3 * 8 * 8).double()
    x, y = _pair(14, shape=(1, 3, 8, 8))
    fn = lambda t: discriminator_loss(disc, t, y, gamma=10.0)
    assert relative_error(autograd_gradient(fn, x), fd_gradient(fn, x)) < FD_TOL


def test_gradient_penalty_nonnegative():
    disc = TinyCritic(3 * 8 * 8).double()
    x, _ = _pair(15)
    assert gradient_penalty(disc, x).item() >= 0


# --- invariants --------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_nonnegativity_random_inputs(seed):
    x, y = _pair(seed, shape=(2, 3, 8, 8), dtype=torch.float32)
    phi = RandomFeaturePyramid()
    assert pixel_loss(x, y).item() >= 0
    assert perceptual_loss(x, y, phi).item() >= 0
    assert regularization_loss(torch.randn(2, 3, 4), torch.zeros(4)).item() >= 0


def test_frozen_extractors_unchanged_by_backward():
    phi = RandomFeaturePyramid()
    psi = RandomEmbedder()
    before = [p.detach().clone() for p in list(phi.parameters()) + list(psi.parameters())]
    x, y = _pair(16, dtype=torch.float32)
    y = y.requires_grad_(True)
    loss = perceptual_loss(x, y, phi) + identity_loss(x, y, psi)
    loss.backward()
    after = list(phi.parameters()) + list(psi.parameters())
    for b, a in zip(before, after):
        assert torch.equal(b, a)
        assert a.grad is None
    assert y.grad is not None
