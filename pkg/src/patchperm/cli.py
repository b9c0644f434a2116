"""Command-line entry point: ``patchperm {train,render,eval,permute}``.

Every subcommand accepts ``--config FILE`` (YAML or JSON) whose keys are the
flag names with dashes replaced by underscores. Flags given on the command
line override file values; unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__

VGG_ENV = "P2_VGG_WEIGHTS"
_UNSET = object()


class UserError(Exception):
    """Expected failure; reported as a one-line diagnostic with exit code 1."""


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=32)


def _common(p):
    p.add_argument("--config", default=None, help="YAML/JSON file with default values for these flags")
    p.add_argument("-v", "--verbose", action="store_true", default=False, help="log progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchperm", formatter_class=_formatter,
        description="Single-style-image GAN style transfer and LBP texture scoring.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    t = sub.add_parser("train", formatter_class=_formatter, help="train a generator on one style image")
    _common(t)
    t.add_argument("--style", default=None, help="style image (PNG/JPEG)")
    t.add_argument("--content-dir", default=None, help="directory of content images")
    t.add_argument("--out", default="run", help="output directory")
    t.add_argument("--vgg-weights", default=None,
                   help=f"VGG16 weight archive (.pth or .h5); falls back to ${VGG_ENV}")
    t.add_argument("--n", type=int, default=9, help="patch size")
    t.add_argument("--t", type=int, default=24, help="mosaic grid side in patches")
    t.add_argument("--lam", type=float, default=5e-6, help="content loss weight")
    t.add_argument("--lr", type=float, default=2e-4, help="RMSProp learning rate")
    t.add_argument("--rmsprop-decay", type=float, default=0.9, help="RMSProp squared-gradient decay")
    t.add_argument("--batch-size", type=int, default=4, help="content crops per step")
    t.add_argument("--iterations", type=int, default=1000, help="training steps")
    t.add_argument("--seed", type=int, default=0, help="random seed")
    t.add_argument("--checkpoint-every", type=int, default=500, help="steps between checkpoints")
    t.add_argument("--crop-size", type=int, default=72, help="content crop side (multiple of n)")
    t.add_argument("--generator-width", type=int, default=32, help="generator base channels")
    t.add_argument("--n-residual", type=int, default=4, help="generator residual blocks")
    t.add_argument("--saturating", action="store_true", default=False,
                   help="use the literal log(1 - D(G(x))) generator loss")
    t.add_argument("--debug", action="store_true", default=False,
                   help="verify mosaic provenance every step")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--no-figures", action="store_true", default=False,
                   help="skip writing loss_curves.png")

    r = sub.add_parser("render", formatter_class=_formatter, help="stylize images with a checkpoint")
    _common(r)
    r.add_argument("--checkpoint", default=None, help="checkpoint file")
    r.add_argument("--in", dest="inp", default=None, help="input image or directory")
    r.add_argument("--out", default=None, help="output image, or directory when --in is one")
    r.add_argument("--figure", default=None, help="optional contact sheet PNG of inputs and outputs")

    e = sub.add_parser("eval", formatter_class=_formatter, help="LBP texture score S(a, b)")
    _common(e)
    e.add_argument("--set-a", default=None, help="image or directory (reference patches)")
    e.add_argument("--set-b", default=None, help="image or directory (query patches)")
    e.add_argument("--patch", type=int, default=32, help="patch side")
    e.add_argument("--w", type=int, default=1000, help="patches drawn from each a image")
    e.add_argument("--z", type=int, default=1000, help="patches drawn from each b image")
    e.add_argument("--seed", type=int, default=1, help="random seed")
    e.add_argument("--csv", default=None, help="optional CSV of per-patch nearest distances")
    e.add_argument("--figure", default=None, help="optional histogram PNG of per-patch distances")

    m = sub.add_parser("permute", formatter_class=_formatter, help="write patch-permuted mosaics")
    _common(m)
    m.add_argument("--style", default=None, help="style image")
    m.add_argument("--n", type=int, default=9, help="patch size")
    m.add_argument("--t", type=int, default=24, help="mosaic grid side in patches")
    m.add_argument("--k", type=int, default=4, help="number of mosaics")
    m.add_argument("--seed", type=int, default=0, help="random seed")
    m.add_argument("--out", default=None, help="output directory")
    m.add_argument("--figure", action="store_true", default=False,
                   help="also write mosaics.png contact sheet")
    return parser


def _resolve(parser, args, argv):
    """Merge defaults < config file < explicit flags into a plain dict."""
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in subparser._actions if a.dest != "help"}
    probe = argparse.Namespace(**{d: _UNSET for d in dests})
    subparser.parse_args(argv[1:], namespace=probe)
    explicit = {d for d in dests if getattr(probe, d) is not _UNSET}

    values = {d: getattr(args, d) for d in dests}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UserError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise UserError(f"cannot parse config file {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise UserError(f"config file {path} must hold a mapping")
        aliases = {"in": "inp"}
        doc = {aliases.get(k, k).replace("-", "_"): v for k, v in doc.items()}
        unknown = set(doc) - (dests - {"config"})
        if unknown:
            raise UserError(f"unknown config keys for '{args.command}': {sorted(unknown)}")
        for k, v in doc.items():
            if k not in explicit:
                values[k] = v
    return values


def _require(values, *names):
    for name in names:
        if values.get(name) in (None, ""):
            flag = "--in" if name == "inp" else "--" + name.replace("_", "-")
            raise UserError(f"missing required option {flag}")


def _image_list(path) -> list:
    from .imageio import index_dataset

    path = Path(path)
    if path.is_dir():
        entries = list(index_dataset(path).entries)
        if not entries:
            raise UserError(f"no images found in {path}")
        return entries
    if not path.is_file():
        raise UserError(f"no such file or directory: {path}")
    return [path]


def cmd_train(v) -> int:
    from .trainer import TrainConfig, train

    _require(v, "style", "content_dir", "out")
    weights = v["vgg_weights"] or os.environ.get(VGG_ENV, "")
    if not weights:
        raise UserError(f"no VGG16 weights: pass --vgg-weights or set ${VGG_ENV}")
    cfg = TrainConfig(
        style_path=str(v["style"]), content_root=str(v["content_dir"]), output_dir=str(v["out"]),
        vgg_weights=str(weights), n=v["n"], T=v["t"], lam=v["lam"], learning_rate=v["lr"],
        rmsprop_decay=v["rmsprop_decay"], batch_size=v["batch_size"], iterations=v["iterations"],
        seed=v["seed"], checkpoint_every=v["checkpoint_every"], crop_size=v["crop_size"],
        generator_width=v["generator_width"], n_residual=v["n_residual"],
        saturating=bool(v["saturating"]), debug=bool(v["debug"]))
    ckpt = train(cfg, resume=v["resume"], make_figures=not v["no_figures"])
    print(f"trained {ckpt.iteration} iterations -> {Path(cfg.output_dir) / 'final.ckpt'}")
    return 0


def _render_any_size(ckpt, image):
    """Reflect-pad to the generator's size grid, render, crop back."""
    from .generator import MIN_SIDE
    from .trainer import render

    h, w = image.shape[:2]
    ph = max(MIN_SIDE, -(-h // 4) * 4) - h
    pw = max(MIN_SIDE, -(-w // 4) * 4) - w
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "symmetric"
        padded = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode=mode)
        return render(ckpt, padded)[:h, :w]
    return render(ckpt, image)


def cmd_render(v) -> int:
    from .imageio import load_image, save_image
    from .trainer import load_checkpoint

    _require(v, "checkpoint", "inp", "out")
    ckpt = load_checkpoint(v["checkpoint"])
    src = Path(v["inp"])
    inputs = _image_list(src)
    out = Path(v["out"])
    if src.is_dir():
        out.mkdir(parents=True, exist_ok=True)
        targets = [out / (p.stem + ".png") for p in inputs]
    else:
        targets = [out]
    shown = []
    for p, target in zip(inputs, targets):
        image = load_image(p)
        result = _render_any_size(ckpt, image)
        save_image(result, target)
        if len(shown) < 8:
            shown += [image, result]
        print(f"{p} -> {target}")
    if v["figure"]:
        from .report import save_contact_sheet
        save_contact_sheet(shown, v["figure"], ncols=4)
    return 0


def cmd_eval(v) -> int:
    from .imageio import load_image
    from .texscore import ScoreConfig, score_details

    _require(v, "set_a", "set_b")
    cfg = ScoreConfig(patch_size=v["patch"], W=v["w"], Z=v["z"], seed=v["seed"])
    try:
        cfg.validate()
    except ValueError as exc:
        raise UserError(str(exc)) from None
    set_a, set_b = _image_list(v["set_a"]), _image_list(v["set_b"])
    images_b = [load_image(p) for p in set_b]
    scores, rows, minima = [], [], []
    for pa in set_a:
        a = load_image(pa)
        for pb, b in zip(set_b, images_b):
            det = score_details(a, b, cfg)
            scores.append(det.score)
            minima.append(det.minima)
            for j, ((r, c), d) in enumerate(zip(det.origins_b, det.minima)):
                rows.append([str(pa), str(pb), j, int(r), int(c), f"{d:.10g}"])
    score = float(np.mean(scores))
    print(f"S={score:.4f}")
    if len(scores) > 1:
        print(f"pairs={len(scores)} std={np.std(scores):.4f}")
    if v["csv"]:
        csv_path = Path(v["csv"])
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["image_a", "image_b", "patch_b", "row", "col", "min_distance"])
            writer.writerows(rows)
        echo = {k: v[k] for k in ("set_a", "set_b", "patch", "w", "z", "seed")}
        csv_path.with_suffix(".config.json").write_text(json.dumps(echo, indent=2, default=str))
    if v["figure"]:
        from .report import plot_score_distribution
        plot_score_distribution(np.concatenate(minima), v["figure"], score)
    return 0


def cmd_permute(v) -> int:
    from .imageio import load_image, save_image
    from .permute import PermutationSpec, permutation_stream

    _require(v, "style", "out")
    style = load_image(v["style"])
    spec = PermutationSpec(n=v["n"], T=v["t"], K=v["k"], seed=v["seed"])
    spec.validate(style)
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    mosaics = []
    with open(out / "sources.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mosaic", "block", "row", "col"])
        for i, mosaic in enumerate(permutation_stream(style, spec)):
            save_image(mosaic.buffer, out / f"mosaic_{i:03d}.png")
            writer.writerows([i, k, r, c] for k, (r, c) in enumerate(mosaic.sources))
            mosaics.append(mosaic.buffer)
    echo = {k: v[k] for k in ("style", "n", "t", "k", "seed")}
    (out / "config.json").write_text(json.dumps(echo, indent=2, default=str))
    if v["figure"]:
        from .report import save_contact_sheet
        save_contact_sheet(mosaics[:16], out / "mosaics.png", ncols=4)
    print(f"wrote {len(mosaics)} mosaics of {spec.side}x{spec.side} to {out}")
    return 0


COMMANDS = {"train": cmd_train, "render": cmd_render, "eval": cmd_eval, "permute": cmd_permute}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .discriminator import DiscriminatorConfigError
    from .imageio import ImageFormatError
    from .perceptual import WeightFormatError
    from .trainer import ConfigError, TrainingError

    try:
        values = _resolve(parser, args, argv)
        return COMMANDS[args.command](values)
    except (UserError, ConfigError, TrainingError, WeightFormatError, ImageFormatError,
            DiscriminatorConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
