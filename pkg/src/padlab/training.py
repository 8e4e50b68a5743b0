"""Training harness: GAN pretraining, encoder training, evaluation.

All sampling (batch order, latent draws) is a pure function of (seed, step),
so metric logs reproduce exactly from a config + seed, and runs resumed from
a checkpoint (weights + Adam moments) continue bit-exactly. The generator is
frozen during encoder training; the harness verifies it did not move.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path

import torch
from torch import Tensor, nn

from .checkpoint import (
    load_adam_arrays,
    load_archive,
    load_encoder_checkpoint,
    load_gan_checkpoint,
    load_module_arrays,
    save_encoder_checkpoint,
    save_gan_checkpoint,
)
from .config import EncoderConfig, GeneratorConfig, LossWeights, TrainConfig
from .data import BatchStream, DataView, load_dataset
from .discriminator import Discriminator
from .encoder import Encoder, padding_from
from .errors import ConfigError, NumericError
from .generator import Generator, broadcast_to_wplus
from .losses import (
    LossParts,
    RandomEmbedder,
    RandomFeaturePyramid,
    adversarial_loss_encoder,
    discriminator_loss,
    identity_loss,
    perceptual_distances,
    perceptual_loss,
    pixel_loss,
    regularization_loss,
    total_encoder_loss,
)
from .seeding import derive_seed, torch_generator

log = logging.getLogger(__name__)


class MetricLog:
    """Line-oriented metrics file: one ``step<TAB>name<TAB>value`` per line.

    Never receives wall-clock values, so files are byte-reproducible.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a")

    def log(self, step: int, name: str, value: float) -> None:
        self._fh.write(f"{step}\t{name}\t{float(value)!r}\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    @staticmethod
    def read(path: str | Path) -> list[tuple[int, str, float]]:
        out = []
        for line in Path(path).read_text().splitlines():
            step, name, value = line.split("\t")
            out.append((int(step), name, float(value)))
        return out


def params_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameters and buffers, order-stable."""
    h = hashlib.sha256()
    for key, value in sorted(module.state_dict().items()):
        h.update(key.encode())
        h.update(value.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _check_finite(step: int, **values: Tensor) -> None:
    for name, value in values.items():
        if not torch.isfinite(value).all():
            raise NumericError(f"non-finite {name} at step {step}; aborting run")


def compute_average_latent(generator: Generator, n_samples: int = 10000, seed: int = 0) -> Tensor:
    """Mean mapped style vector over seeded latent draws."""
    if n_samples < 1:
        raise ConfigError("n_samples must be at least 1")
    g = torch_generator("avg_latent", seed)
    d = generator.config.latent_dim
    total = torch.zeros(d)
    done = 0
    with torch.no_grad():
        while done < n_samples:
            k = min(512, n_samples - done)
            z = torch.randn(k, d, generator=g)
            total += generator.map_latent(z).sum(dim=0)
            done += k
    return total / n_samples


def _sample_fake(generator: Generator, batch: int, seed: int, tag: str, step: int) -> Tensor:
    z = torch.randn(batch, generator.config.latent_dim, generator=torch_generator(tag, seed, step))
    w = generator.map_latent(z)
    return generator.synthesize(broadcast_to_wplus(w, generator.layer_count))


def pretrain_generator(
    gen_config: GeneratorConfig,
    train_config: TrainConfig,
    out_dir: str | Path,
    weights: LossWeights | None = None,
    resume_from: str | Path | None = None,
) -> Path:
    """Adversarially train a toy generator; returns the checkpoint path."""
    weights = weights or LossWeights()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_view, _ = load_dataset(train_config.data)
    stream = BatchStream(train_view, train_config.batch_size, derive_seed("gan_data", train_config.seed))

    generator = Generator(gen_config)
    disc = Discriminator(gen_config)
    opt_g = torch.optim.Adam(generator.parameters(), lr=train_config.lr_generator, betas=train_config.gan_adam_betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=train_config.lr_discriminator, betas=train_config.gan_adam_betas)

    start = 0
    if resume_from is not None:
        arrays, manifest = load_archive(resume_from)
        if manifest.get("kind") != "gan":
            raise ConfigError(f"{resume_from} is not a GAN checkpoint")
        load_module_arrays(generator.mapping, arrays, "map")
        w_avg = arrays.pop("gen/w_avg")
        load_module_arrays(generator.synthesis, arrays, "gen")
        with torch.no_grad():
            generator.w_avg.copy_(torch.from_numpy(w_avg))
        load_module_arrays(disc, arrays, "disc")
        load_adam_arrays(opt_g, arrays, "opt/g")
        load_adam_arrays(opt_d, arrays, "opt/d")
        start = int(manifest.get("step") or 0)

    metrics = MetricLog(out_dir / "metrics.log")
    seed = train_config.seed
    for step in range(start, train_config.steps):
        real = stream.batch(step)
        with torch.no_grad():
            fake = _sample_fake(generator, train_config.batch_size, seed, "z_d", step)
        d_loss = discriminator_loss(disc, real, fake, weights.gp_gamma, squared=weights.gp_squared)
        opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        opt_d.step()

        fake_g = _sample_fake(generator, train_config.batch_size, seed, "z_g", step)
        g_loss = adversarial_loss_encoder(disc, fake_g)
        opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        opt_g.step()

        _check_finite(step, d_loss=d_loss, g_loss=g_loss)
        with torch.no_grad():
            d_real = disc(real).mean()
            d_fake = disc(fake_g.detach()).mean()
        metrics.log(step, "d_loss", d_loss.item())
        metrics.log(step, "g_loss", g_loss.item())
        metrics.log(step, "score_gap", (d_real - d_fake).item())
        if train_config.checkpoint_every and (step + 1) % train_config.checkpoint_every == 0:
            with torch.no_grad():
                generator.w_avg.copy_(compute_average_latent(generator, train_config.avg_latent_samples, seed))
            save_gan_checkpoint(
                out_dir / f"gan_step{step + 1}",
                generator,
                disc,
                step=step + 1,
                optimizers={"g": opt_g, "d": opt_d},
            )

    with torch.no_grad():
        generator.w_avg.copy_(compute_average_latent(generator, train_config.avg_latent_samples, seed))
    metrics.close()
    return save_gan_checkpoint(
        out_dir / "gan",
        generator,
        disc,
        step=train_config.steps,
        optimizers={"g": opt_g, "d": opt_d},
    )


def reconstruct(encoder: Encoder, generator: Generator, images: Tensor) -> tuple[Tensor, Tensor, object]:
    """Encode and re-synthesize a batch; returns (recon, w_plus, padding)."""
    out = encoder(images)
    padding = padding_from(out, generator)
    recon = generator.synthesize(out.w_plus, padding)
    return recon, out.w_plus, padding


def eval_metrics(
    encoder: Encoder,
    generator: Generator,
    view: DataView,
    count: int,
    batch_size: int = 8,
    extractor=None,
) -> dict[str, float]:
    """Reconstruction metrics over held-out images (plain per-pixel MSE in
    [-1, 1] units, perceptual distance, wall seconds per image)."""
    extractor = extractor or RandomFeaturePyramid()
    was_training = encoder.training
    encoder.eval()
    n = min(count, len(view))
    mse_sum, per_sum = 0.0, 0.0
    t0 = time.perf_counter()
    with torch.no_grad():
        for lo in range(0, n, batch_size):
            batch = view.batch(range(lo, min(lo + batch_size, n)))
            recon, _, _ = reconstruct(encoder, generator, batch)
            mse_sum += (recon - batch).pow(2).mean(dim=(1, 2, 3)).sum().item()
            per_sum += perceptual_distances(batch, recon, extractor).sum().item()
    elapsed = time.perf_counter() - t0
    if was_training:
        encoder.train()
    return {
        "mse": mse_sum / n,
        "perceptual": per_sum / n,
        "seconds_per_image": elapsed / n,
        "count": n,
    }


def train_encoder(
    gan_checkpoint: str | Path,
    enc_config: EncoderConfig,
    weights: LossWeights,
    train_config: TrainConfig,
    out_dir: str | Path,
) -> Path:
    """Train an encoder against a frozen pretrained generator; returns the
    best-eval checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    generator, disc, _ = load_gan_checkpoint(
        gan_checkpoint, with_discriminator=weights.adversarial > 0
    )
    generator.eval()
    generator.requires_grad_(False)
    frozen_digest = params_checksum(generator)

    if enc_config.input_resolution != train_config.data.resolution:
        log.info(
            "encoder input %d != data resolution %d; images are resized on the fly",
            enc_config.input_resolution,
            train_config.data.resolution,
        )
    if generator.config.max_resolution != train_config.data.resolution:
        raise ConfigError(
            f"generator resolution {generator.config.max_resolution} != "
            f"data resolution {train_config.data.resolution}"
        )

    encoder = Encoder(enc_config, generator.config)
    if encoder.padding is not None and generator.config.replace_const_input:
        encoder.padding.init_const_bias(generator.const_input)
    with torch.no_grad():
        encoder.style_offset.copy_(generator.w_avg)
    encoder.train()

    extractor = RandomFeaturePyramid()
    embedder = RandomEmbedder() if weights.identity > 0 else None

    train_view, test_view = load_dataset(train_config.data)
    stream = BatchStream(train_view, train_config.batch_size, derive_seed("enc_data", train_config.seed))

    opt_e = torch.optim.Adam(encoder.parameters(), lr=train_config.lr_encoder, betas=train_config.adam_betas)
    opt_d = None
    if weights.adversarial > 0:
        opt_d = torch.optim.Adam(disc.parameters(), lr=train_config.lr_discriminator, betas=train_config.adam_betas)

    metrics = MetricLog(out_dir / "metrics.log")
    best = {"mse": float("inf"), "step": -1, "state": None}

    def run_eval(step: int) -> None:
        m = eval_metrics(encoder, generator, test_view, train_config.eval_count, extractor=extractor)
        metrics.log(step, "eval_mse", m["mse"])
        metrics.log(step, "eval_perceptual", m["perceptual"])
        if m["mse"] < best["mse"]:
            best.update(mse=m["mse"], step=step, state={k: v.detach().clone() for k, v in encoder.state_dict().items()})

    run_eval(0)
    for step in range(train_config.steps):
        batch = stream.batch(step)
        recon, w_plus, _ = reconstruct(encoder, generator, batch)
        parts = LossParts(
            pixel=pixel_loss(batch, recon),
            perceptual=perceptual_loss(batch, recon, extractor),
        )
        if weights.identity > 0:
            parts.identity = identity_loss(batch, recon, embedder)
        if weights.adversarial > 0:
            parts.adversarial = adversarial_loss_encoder(disc, recon)
        if weights.regularization > 0:
            parts.regularization = regularization_loss(w_plus, generator.w_avg)
        loss = total_encoder_loss(parts, weights)
        _check_finite(step, encoder_loss=loss)
        opt_e.zero_grad(set_to_none=True)
        loss.backward()
        opt_e.step()
        metrics.log(step, "loss", loss.item())
        metrics.log(step, "pixel", float(parts.pixel))

        if opt_d is not None:
            d_loss = discriminator_loss(
                disc, batch, recon.detach(), weights.gp_gamma, squared=weights.gp_squared
            )
            _check_finite(step, discriminator_loss=d_loss)
            opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            opt_d.step()
            metrics.log(step, "d_loss", d_loss.item())

        if (step + 1) % train_config.eval_every == 0 or step + 1 == train_config.steps:
            run_eval(step + 1)

    if params_checksum(generator) != frozen_digest:
        raise NumericError("frozen generator changed during encoder training")

    metrics.close()
    save_encoder_checkpoint(out_dir / "encoder_final", encoder, step=train_config.steps, optimizers={"e": opt_e})
    if best["state"] is not None:
        encoder.load_state_dict(best["state"])
    return save_encoder_checkpoint(
        out_dir / "encoder_best", encoder, step=best["step"], extra={"eval_mse": best["mse"]}
    )


def evaluate_checkpoints(
    encoder_ckpt: str | Path,
    gan_ckpt: str | Path,
    view: DataView,
    out_dir: str | Path | None = None,
    limit: int | None = None,
) -> dict[str, float]:
    """Metrics of a trained encoder over a dataset split; writes report.json
    (timing included there only) and metric log lines when out_dir is given."""
    encoder, _ = load_encoder_checkpoint(encoder_ckpt)
    generator, _, _ = load_gan_checkpoint(gan_ckpt)
    if encoder.gen_config != generator.config:
        raise ConfigError("encoder was trained for a different generator config")
    m = eval_metrics(encoder, generator, view, limit or len(view))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
        metrics = MetricLog(out_dir / "metrics.log")
        metrics.log(0, "eval_mse", m["mse"])
        metrics.log(0, "eval_perceptual", m["perceptual"])
        metrics.close()
    return m
