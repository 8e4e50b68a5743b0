"""Command-line entry point.

Subcommands: pretrain-gan, train-encoder, invert, blend, interpolate,
make-direction, apply-direction, evaluate, export-grid. Exit codes: 0 ok,
1 runtime failure, 2 usage/config error; failures print one JSON line to
stderr. Every run writes its resolved inputs next to the outputs
(``config.json`` for training commands, ``run.json`` everywhere), so a run
can be replayed exactly from its snapshot and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import checkpoint, editing, training
from .config import ExperimentConfig, apply_overrides, config_to_dict, load_config, save_config
from .data import load_dataset, load_image, save_image
from .errors import ConfigError, UsageError


def _out_dir(args, command: str) -> Path:
    root = Path(os.environ.get("PADLAB_OUT", "runs"))
    out = Path(args.out) if args.out else root / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(out: Path, command: str, payload: dict) -> None:
    payload = {"command": command, **payload}
    (out / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"train.seed={args.seed}")
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _add_common(p: argparse.ArgumentParser, with_config: bool = True) -> None:
    if with_config:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")
        p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--out", help="output directory (default $PADLAB_OUT/<command>)")


def cmd_pretrain_gan(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, "pretrain-gan")
    save_config(cfg, out / "config.json")
    _write_run(out, "pretrain-gan", {"config": config_to_dict(cfg)})
    path = training.pretrain_generator(cfg.generator, cfg.train, out, weights=cfg.loss)
    print(f"checkpoint written to {path}")
    return 0


def cmd_train_encoder(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, "train-encoder")
    save_config(cfg, out / "config.json")
    _write_run(out, "train-encoder", {"config": config_to_dict(cfg), "gan": str(args.gan)})
    path = training.train_encoder(args.gan, cfg.encoder, cfg.loss, cfg.train, out)
    print(f"checkpoint written to {path}")
    return 0


def cmd_invert(args) -> int:
    out = _out_dir(args, "invert")
    encoder, _ = checkpoint.load_encoder_checkpoint(args.encoder)
    generator, _, _ = checkpoint.load_gan_checkpoint(args.gan)
    if encoder.gen_config != generator.config:
        raise ConfigError("encoder and generator checkpoints disagree on the generator config")
    image = load_image(args.image)
    inv = editing.invert(image, encoder, generator, source_id=args.id or Path(args.image).name)
    inv.save(out / "inversion")
    _write_run(out, "invert", {"image": str(args.image), "gan": str(args.gan), "encoder": str(args.encoder)})
    print(f"inversion written to {out / 'inversion'}")
    return 0


def cmd_blend(args) -> int:
    out = _out_dir(args, "blend")
    generator, _, _ = checkpoint.load_gan_checkpoint(args.gan)
    a = editing.InversionResult.load(Path(args.a) / "inversion" if (Path(args.a) / "inversion").is_dir() else args.a)
    b = editing.InversionResult.load(Path(args.b) / "inversion" if (Path(args.b) / "inversion").is_dir() else args.b)
    img = editing.blend(generator, a, b)
    save_image(img, out / "blend.png")
    _write_run(out, "blend", {"a": str(args.a), "b": str(args.b), "gan": str(args.gan)})
    print(f"blend written to {out / 'blend.png'}")
    return 0


def _load_inversion(path: str | Path) -> editing.InversionResult:
    p = Path(path)
    return editing.InversionResult.load(p / "inversion" if (p / "inversion").is_dir() else p)


def cmd_interpolate(args) -> int:
    out = _out_dir(args, "interpolate")
    generator, _, _ = checkpoint.load_gan_checkpoint(args.gan)
    b = _load_inversion(args.b)
    if args.from_average:
        if args.space != "padding":
            raise UsageError("--from-average interpolates padding from the native constants")
        a = editing.average_inversion(generator)
    else:
        if not args.a:
            raise UsageError("--a is required unless --from-average is given")
        a = _load_inversion(args.a)
    frames = []
    for k in range(args.steps):
        alpha = k / (args.steps - 1) if args.steps > 1 else 0.0
        fn = editing.interpolate_latent if args.space == "style" else editing.interpolate_padding
        frame = fn(generator, a, b, alpha)
        frames.append(frame)
        save_image(frame, out / f"frame_{k:02d}.png")
    editing.export_grid(frames, out / "strip.png", cols=len(frames))
    _write_run(
        out,
        "interpolate",
        {"a": str(args.a), "b": str(args.b), "space": args.space, "steps": args.steps,
         "from_average": bool(args.from_average), "gan": str(args.gan)},
    )
    print(f"{len(frames)} frames written to {out}")
    return 0


def cmd_make_direction(args) -> int:
    out = _out_dir(args, "make-direction")
    encoder, _ = checkpoint.load_encoder_checkpoint(args.encoder)
    generator, _, _ = checkpoint.load_gan_checkpoint(args.gan)
    direction = editing.make_direction(
        load_image(args.image_a), load_image(args.image_b), encoder, generator, label=args.label
    )
    direction.save(out / "direction")
    _write_run(
        out,
        "make-direction",
        {"image_a": str(args.image_a), "image_b": str(args.image_b), "label": args.label,
         "gan": str(args.gan), "encoder": str(args.encoder)},
    )
    print(f"direction written to {out / 'direction'}")
    return 0


def cmd_apply_direction(args) -> int:
    out = _out_dir(args, "apply-direction")
    generator, _, _ = checkpoint.load_gan_checkpoint(args.gan)
    inv = _load_inversion(args.inversion)
    p = Path(args.direction)
    direction = editing.EditDirection.load(p / "direction" if (p / "direction").is_dir() else p)
    img = editing.apply_direction(generator, inv, direction, args.strength, args.space)
    save_image(img, out / "edited.png")
    _write_run(
        out,
        "apply-direction",
        {"inversion": str(args.inversion), "direction": str(args.direction),
         "space": args.space, "strength": args.strength, "gan": str(args.gan)},
    )
    print(f"edit written to {out / 'edited.png'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, "evaluate")
    save_config(cfg, out / "config.json")
    train_view, test_view = load_dataset(cfg.train.data)
    view = train_view if args.split == "train" else test_view
    metrics = training.evaluate_checkpoints(args.encoder, args.gan, view, out, limit=args.limit)
    _write_run(out, "evaluate", {"config": config_to_dict(cfg), "split": args.split,
                                 "gan": str(args.gan), "encoder": str(args.encoder)})
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_export_grid(args) -> int:
    out = _out_dir(args, "export-grid")
    images = [load_image(p) for p in args.images]
    path = editing.export_grid(images, out / args.name, cols=args.cols)
    _write_run(out, "export-grid", {"images": [str(p) for p in args.images], "cols": args.cols})
    print(f"grid written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain-gan", help="adversarially train a toy generator")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain_gan)

    p = sub.add_parser("train-encoder", help="train an inversion encoder against a frozen GAN")
    _add_common(p)
    p.add_argument("--gan", required=True, help="pretrained GAN checkpoint directory")
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("invert", help="invert one image to style codes + padding")
    _add_common(p, with_config=False)
    p.add_argument("--gan", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--id", help="source id stored in the archive")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("blend", help="render A's style codes with B's padding")
    _add_common(p, with_config=False)
    p.add_argument("--a", required=True, help="inversion output directory of A")
    p.add_argument("--b", required=True, help="inversion output directory of B")
    p.add_argument("--gan", required=True)
    p.set_defaults(func=cmd_blend)

    p = sub.add_parser("interpolate", help="interpolate one space, hold the other")
    _add_common(p, with_config=False)
    p.add_argument("--a", help="inversion output directory of A")
    p.add_argument("--b", required=True, help="inversion output directory of B")
    p.add_argument("--gan", required=True)
    p.add_argument("--space", choices=editing.SPACES, default="padding")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--from-average", action="store_true",
                   help="start from the average image (native padding, average codes)")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("make-direction", help="edit direction from one customized pair")
    _add_common(p, with_config=False)
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--gan", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--label", default="")
    p.set_defaults(func=cmd_make_direction)

    p = sub.add_parser("apply-direction", help="apply a direction in one space")
    _add_common(p, with_config=False)
    p.add_argument("--inversion", required=True)
    p.add_argument("--direction", required=True)
    p.add_argument("--gan", required=True)
    p.add_argument("--space", choices=editing.SPACES, required=True)
    p.add_argument("--strength", type=float, default=1.0)
    p.set_defaults(func=cmd_apply_direction)

    p = sub.add_parser("evaluate", help="reconstruction metrics over a dataset split")
    _add_common(p)
    p.add_argument("--gan", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--limit", type=int, help="cap the number of images")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-grid", help="tile image files into one grid PNG")
    _add_common(p, with_config=False)
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--cols", type=int)
    p.add_argument("--name", default="grid.png")
    p.set_defaults(func=cmd_export_grid)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
