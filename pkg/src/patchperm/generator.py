"""Feed-forward encoder/decoder generator.

conv9 -> two stride-2 convs -> residual blocks -> two (nearest upsample +
conv3) stages -> conv9 -> tanh. Instance norm and ReLU after every conv but
the last; reflection padding throughout.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .imageio import check_image, from_tensor, to_tensor

MIN_SIDE = 16


class ConvLayer(nn.Sequential):
    def __init__(self, cin, cout, kernel, stride=1, norm=True, relu=True):
        layers = [nn.ReflectionPad2d(kernel // 2), nn.Conv2d(cin, cout, kernel, stride)]
        if norm:
            layers.append(nn.InstanceNorm2d(cout, affine=True))
        if relu:
            layers.append(nn.ReLU(inplace=True))
        super().__init__(*layers)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            ConvLayer(channels, channels, 3),
            ConvLayer(channels, channels, 3, relu=False),
        )

    def forward(self, x):
        return x + self.body(x)


class UpsampleConv(nn.Sequential):
    def __init__(self, cin, cout):
        super().__init__(nn.Upsample(scale_factor=2, mode="nearest"), ConvLayer(cin, cout, 3))


class Generator(nn.Module):
    def __init__(self, width: int = 32, n_residual: int = 4):
        super().__init__()
        self.width = width
        self.n_residual = n_residual
        w = width
        self.encoder = nn.Sequential(
            ConvLayer(3, w, 9),
            ConvLayer(w, 2 * w, 3, stride=2),
            ConvLayer(2 * w, 4 * w, 3, stride=2),
        )
        self.residual = nn.Sequential(*[ResidualBlock(4 * w) for _ in range(n_residual)])
        self.decoder = nn.Sequential(
            UpsampleConv(4 * w, 2 * w),
            UpsampleConv(2 * w, w),
            ConvLayer(w, 3, 9, norm=False, relu=False),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """[-1, 1] in, [-1, 1] out; H and W must be multiples of 4."""
        h, w = x.shape[-2:]
        check_size(h, w)
        return torch.tanh(self.decoder(self.residual(self.encoder(x))))

    def arch(self) -> dict:
        return {"width": self.width, "n_residual": self.n_residual}


def check_size(h: int, w: int) -> None:
    if h < MIN_SIDE or w < MIN_SIDE or h % 4 or w % 4:
        raise ValueError(
            f"generator input {h}x{w} must be at least {MIN_SIDE} and a multiple of 4 per side")


def build_generator(seed: int = 0, width: int = 32, n_residual: int = 4) -> Generator:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        return Generator(width=width, n_residual=n_residual)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


@torch.no_grad()
def generate(model: Generator, content: np.ndarray) -> np.ndarray:
    check_image(content, "content")
    check_size(*content.shape[:2])
    was_training = model.training
    model.eval()
    try:
        dtype = next(model.parameters()).dtype
        out = model(to_tensor(content, signed=True).to(dtype))
    finally:
        model.train(was_training)
    return from_tensor(out, signed=True)
