"""Alternating RMSProp training of the generator against the patch discriminator.

Each iteration draws one fresh mosaic of the style image as the real sample
and ``batch_size`` content crops as generator inputs, updates the
discriminator once, then the generator once. All randomness is derived from
``(seed, iteration)``, so runs are reproducible and resumable.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import perceptual
from .discriminator import DiscriminatorConfig, PatchDiscriminator, build
from .generator import Generator, build_generator, check_size, generate
from .imageio import center_crop_multiple, index_dataset, load_image
from .objective import (LossReport, adversarial_terms, check_lambda, content_loss,
                        generator_adversarial)
from .permute import PermutationSpec, check_provenance, mosaic_rng, permute

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "patchperm-checkpoint"
CHECKPOINT_VERSION = 1
LOSS_HEADER = ["iter", "d_loss", "g_adv", "g_content", "g_total"]


class TrainingError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    style_path: str = ""
    content_root: str = ""
    output_dir: str = "run"
    vgg_weights: str = ""
    n: int = 9
    T: int = 24
    lam: float = 5e-6
    learning_rate: float = 2e-4
    rmsprop_decay: float = 0.9
    batch_size: int = 4
    iterations: int = 1000
    seed: int = 0
    checkpoint_every: int = 500
    crop_size: int = 72
    disc_kernels: tuple = (3, 3, 1)
    generator_width: int = 32
    n_residual: int = 4
    saturating: bool = False
    debug: bool = False

    def validate(self) -> None:
        try:
            check_lambda(self.lam)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("n", "T", "batch_size", "iterations", "checkpoint_every", "crop_size",
                     "generator_width", "n_residual"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.crop_size % self.n:
            raise ConfigError(f"crop_size {self.crop_size} is not a multiple of n={self.n}")
        try:
            check_size(self.crop_size, self.crop_size)
        except ValueError as exc:
            raise ConfigError(f"crop_size: {exc}") from None
        if math.prod(self.disc_kernels) != self.n:
            raise ConfigError(
                f"discriminator kernels {list(self.disc_kernels)} multiply to "
                f"{math.prod(self.disc_kernels)}, not n={self.n}")

    def discriminator_config(self) -> DiscriminatorConfig:
        kernels = list(self.disc_kernels)
        if kernels == [3, 3, 1]:
            return DiscriminatorConfig(patch_size=self.n)
        return DiscriminatorConfig.from_lists(kernels, kernels, self.n)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["disc_kernels"] = list(self.disc_kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        d = dict(d)
        if "disc_kernels" in d:
            d["disc_kernels"] = tuple(d["disc_kernels"])
        return cls(**d)


@dataclass
class Checkpoint:
    generator: Generator
    discriminator: PatchDiscriminator
    optimizer_g: dict = field(default_factory=dict)
    optimizer_d: dict = field(default_factory=dict)
    iteration: int = 0
    config: dict = field(default_factory=dict)
    preprocessing: str = ""

    def state(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "generator_arch": self.generator.arch(),
            "discriminator_kernels": self.discriminator.cfg.kernels,
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "optimizer_g": self.optimizer_g,
            "optimizer_d": self.optimizer_d,
            "iteration": self.iteration,
            "config": json.dumps(self.config, sort_keys=True),
            "preprocessing": self.preprocessing,
        }


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write-temp-then-rename so a crash never leaves a partial checkpoint."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(ckpt.state(), tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ConfigError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(state, dict) or state.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if state["version"] != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {state['version']}")
    config = json.loads(state["config"])
    gen = Generator(**state["generator_arch"])
    gen.load_state_dict(state["generator"])
    kernels = list(state["discriminator_kernels"])
    n = math.prod(kernels)
    dcfg = (DiscriminatorConfig(patch_size=n) if kernels == [3, 3, 1]
            else DiscriminatorConfig.from_lists(kernels, kernels, n))
    disc = PatchDiscriminator(dcfg)
    disc.load_state_dict(state["discriminator"])
    return Checkpoint(gen, disc, state["optimizer_g"], state["optimizer_d"],
                      state["iteration"], config, state["preprocessing"])


def render(ckpt: Checkpoint, content: np.ndarray) -> np.ndarray:
    return generate(ckpt.generator, content)


class ContentSampler:
    """Random fixed-size crops from the content dataset."""

    def __init__(self, root, n: int, crop_size: int, cache_size: int = 512):
        self.index = index_dataset(root)
        if self.index.count == 0:
            raise TrainingError(f"no content images found under {root}")
        self.n = n
        self.crop_size = crop_size
        self._load = lru_cache(maxsize=cache_size)(self._load_uncached)

    def _load_uncached(self, i: int) -> np.ndarray:
        img = load_image(self.index.entries[i])
        h, w = img.shape[:2]
        if min(h, w) < self.crop_size:
            s = self.crop_size / min(h, w)
            size = (max(self.crop_size, round(w * s)), max(self.crop_size, round(h * s)))
            pil = Image.fromarray(np.round(img * 255).astype(np.uint8)).resize(size, Image.BICUBIC)
            img = np.asarray(pil, dtype=np.float32) / 255.0
        return center_crop_multiple(img, self.n)

    def batch(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        s = self.crop_size
        out = np.empty((batch_size, s, s, 3), dtype=np.float32)
        for b, i in enumerate(rng.integers(0, self.index.count, size=batch_size)):
            img = self._load(int(i))
            h, w = img.shape[:2]
            r = int(rng.integers(0, (h - s) // self.n + 1)) * self.n
            c = int(rng.integers(0, (w - s) // self.n + 1)) * self.n
            out[b] = img[r:r + s, c:c + s]
        return out


def _batch_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1, int(iteration)])


def _nhwc_to_nchw(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x)).permute(0, 3, 1, 2).contiguous()


def _append_loss_rows(path: Path, rows):
    with open(path, "a", newline="") as f:
        csv.writer(f).writerows(rows)


def read_loss_log(path) -> dict:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in LOSS_HEADER}


def train(config: TrainConfig, resume=None, vgg: perceptual.VggSlice | None = None,
          make_figures: bool = True) -> Checkpoint:
    """Run ``config.iterations`` steps (counting from the resumed iteration)."""
    config.validate()
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise TrainingError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise TrainingError(f"output directory is not writable: {out}")

    style = load_image(config.style_path)
    spec = PermutationSpec(n=config.n, T=config.T, K=config.iterations, seed=config.seed)
    spec.validate(style)
    sampler = ContentSampler(config.content_root, config.n, config.crop_size)
    if vgg is None:
        if not config.vgg_weights:
            raise ConfigError("no VGG16 weights given (vgg_weights / --vgg-weights)")
        vgg = perceptual.load_vgg_weights(config.vgg_weights)
    vgg_sum = perceptual.checksum(vgg)

    if resume is not None:
        ckpt = load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume
        gen, disc, start = ckpt.generator, ckpt.discriminator, ckpt.iteration
    else:
        gen = build_generator(config.seed, config.generator_width, config.n_residual)
        disc = build(config.discriminator_config(), init_seed=config.seed + 1)
        ckpt, start = None, 0
    gen.train()
    disc.train()
    opt_g = torch.optim.RMSprop(gen.parameters(), lr=config.learning_rate,
                                alpha=config.rmsprop_decay, momentum=0.0)
    opt_d = torch.optim.RMSprop(disc.parameters(), lr=config.learning_rate,
                                alpha=config.rmsprop_decay, momentum=0.0)
    if ckpt is not None and ckpt.optimizer_g:
        opt_g.load_state_dict(ckpt.optimizer_g)
        opt_d.load_state_dict(ckpt.optimizer_d)

    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    log_path = out / "loss.csv"
    if start == 0 or not log_path.exists():
        with open(log_path, "w", newline="") as f:
            csv.writer(f).writerow(LOSS_HEADER)
    pending = []
    end = start + config.iterations

    def snapshot(it):
        return Checkpoint(gen, disc, opt_g.state_dict(), opt_d.state_dict(), it,
                          config.to_dict(), vgg.preprocessing)

    for it in range(start, end):
        mosaic = permute(style, spec, mosaic_rng(config.seed, it))
        if config.debug and not check_provenance(style, mosaic):
            raise TrainingError(f"iteration {it}: mosaic fails provenance check")
        real = _nhwc_to_nchw(mosaic.buffer[None]) * 2 - 1
        content = _nhwc_to_nchw(sampler.batch(_batch_rng(config.seed, it), config.batch_size))

        fake = gen(content * 2 - 1)

        d_loss, _ = adversarial_terms(disc(real), disc(fake.detach()))
        opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        opt_d.step()

        g_adv = generator_adversarial(disc(fake), saturating=config.saturating)
        g_content = content_loss(vgg(content), vgg((fake + 1) / 2))
        g_total = g_adv + config.lam * g_content
        opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        opt_g.step()

        report = LossReport(d_loss.item(), g_adv.item(), g_content.item(), g_total.item(),
                            config.lam)
        if not all(math.isfinite(v) for v in (report.d_loss, report.g_adv,
                                              report.g_content, report.g_total)):
            _append_loss_rows(log_path, pending + [report.row(it + 1)])
            raise TrainingError(f"non-finite loss at iteration {it + 1}: {report}")
        pending.append(report.row(it + 1))
        if (it + 1) % 50 == 0:
            log.info("iter %d d=%.4f g_adv=%.4f g_content=%.4f", it + 1,
                     report.d_loss, report.g_adv, report.g_content)
        if (it + 1) % config.checkpoint_every == 0 or it + 1 == end:
            _append_loss_rows(log_path, pending)
            pending = []
            save_checkpoint(snapshot(it + 1), out / f"ckpt_{it + 1:06d}.ckpt")

    final = snapshot(end)
    save_checkpoint(final, out / "final.ckpt")
    if perceptual.checksum(vgg) != vgg_sum:
        raise TrainingError("VGG slice parameters changed during training")
    if make_figures:
        from .report import plot_loss_curves
        plot_loss_curves(read_loss_log(log_path), out / "loss_curves.png")
    return final
