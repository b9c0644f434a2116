"""Patch discriminator whose receptive fields tile the input exactly.

Every layer uses ``kernel == stride`` and the kernels multiply to the patch
size ``n``, so each output cell sees exactly one ``n x n`` input patch and
no two cells share an input pixel. No padding is used anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .imageio import check_image, to_tensor

LEAKY_SLOPE = 0.2
INIT_STD = 0.02


class DiscriminatorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kernel: int
    stride: int
    in_channels: int
    out_channels: int
    activation: str = "leaky_relu"


def _table1_layers():
    return (
        LayerSpec(3, 3, 3, 256, "leaky_relu"),
        LayerSpec(3, 3, 256, 512, "leaky_relu"),
        LayerSpec(1, 1, 512, 1, "sigmoid"),
    )


@dataclass(frozen=True)
class DiscriminatorConfig:
    layers: tuple = field(default_factory=_table1_layers)
    patch_size: int = 9

    @classmethod
    def from_lists(cls, kernels, strides, patch_size, channels=None):
        """Convenience constructor; channels default to a 3 -> 64 ... -> 1 chain."""
        L = len(kernels)
        if len(strides) != L:
            raise DiscriminatorConfigError("kernels and strides must have equal length")
        if channels is None:
            channels = [3] + [64 * 2 ** i for i in range(L - 1)] + [1]
        layers = tuple(
            LayerSpec(k, s, channels[i], channels[i + 1],
                      "sigmoid" if i == L - 1 else "leaky_relu")
            for i, (k, s) in enumerate(zip(kernels, strides)))
        return cls(layers=layers, patch_size=patch_size)

    @property
    def kernels(self):
        return [layer.kernel for layer in self.layers]

    @property
    def strides(self):
        return [layer.stride for layer in self.layers]


def validate_config(cfg: DiscriminatorConfig) -> None:
    if not cfg.layers:
        raise DiscriminatorConfigError("discriminator needs at least one layer")
    for l, layer in enumerate(cfg.layers, start=1):
        if layer.kernel != layer.stride:
            raise DiscriminatorConfigError(
                f"layer {l}: k_{l} ≠ s_{l} (kernel {layer.kernel}, stride {layer.stride}); "
                "receptive fields would cross patch borders")
    product = math.prod(cfg.kernels)
    if product != cfg.patch_size:
        raise DiscriminatorConfigError(
            f"kernel product {product} ≠ n={cfg.patch_size}")
    if cfg.layers[0].in_channels != 3:
        raise DiscriminatorConfigError(
            f"layer 1: expects 3 input channels, got {cfg.layers[0].in_channels}")
    for l in range(1, len(cfg.layers)):
        if cfg.layers[l].in_channels != cfg.layers[l - 1].out_channels:
            raise DiscriminatorConfigError(
                f"layer {l + 1}: in_channels {cfg.layers[l].in_channels} does not match "
                f"layer {l} out_channels {cfg.layers[l - 1].out_channels}")
    last = cfg.layers[-1]
    if last.out_channels != 1 or last.activation != "sigmoid":
        raise DiscriminatorConfigError(
            f"layer {len(cfg.layers)}: final layer must map to 1 channel with sigmoid")
    for l, layer in enumerate(cfg.layers[:-1], start=1):
        if layer.activation != "leaky_relu":
            raise DiscriminatorConfigError(
                f"layer {l}: hidden activation must be leaky_relu, got {layer.activation}")


def receptive_fields(layers):
    """(receptive field, jump) of each layer's output on the input grid."""
    rf, jump, out = 1, 1, []
    for layer in layers:
        rf = rf + (layer.kernel - 1) * jump
        jump = jump * layer.stride
        out.append((rf, jump))
    return out


@dataclass
class DiscriminatorOutput:
    grid: np.ndarray
    pooled: float


class PatchDiscriminator(nn.Module):
    """Conv stack + global average pooling over the sigmoid map.

    ``forward`` takes a ``B x 3 x H x W`` tensor in [-1, 1] and returns the
    per-image pooled probability; ``grid`` returns the map before pooling.
    """

    def __init__(self, cfg: DiscriminatorConfig | None = None, validate: bool = True):
        super().__init__()
        cfg = cfg or DiscriminatorConfig()
        if validate:
            validate_config(cfg)
        self.cfg = cfg
        self.convs = nn.ModuleList(
            nn.Conv2d(l.in_channels, l.out_channels, l.kernel, stride=l.stride, padding=0)
            for l in cfg.layers)

    def grid(self, x: torch.Tensor) -> torch.Tensor:
        n = self.cfg.patch_size
        if x.shape[-2] < n or x.shape[-1] < n:
            raise ValueError(
                f"input {x.shape[-2]}x{x.shape[-1]} is smaller than patch size {n}")
        for conv, spec in zip(self.convs, self.cfg.layers):
            x = conv(x)
            if spec.activation == "sigmoid":
                x = torch.sigmoid(x)
            else:
                x = nn.functional.leaky_relu(x, LEAKY_SLOPE)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.grid(x).mean(dim=(1, 2, 3))


def build(cfg: DiscriminatorConfig | None = None, init_seed: int = 0) -> PatchDiscriminator:
    model = PatchDiscriminator(cfg)
    init_weights(model, init_seed)
    return model


def init_weights(model: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for conv in model.convs:
            conv.weight.normal_(0.0, INIT_STD, generator=gen)
            conv.bias.zero_()


def kernel_shapes(model: PatchDiscriminator):
    """Conv weight shapes as (k, k, in, out)."""
    return [tuple(c.weight.permute(2, 3, 1, 0).shape) for c in model.convs]


@torch.no_grad()
def forward(model: PatchDiscriminator, image: np.ndarray) -> DiscriminatorOutput:
    """Score one [0, 1] image; mosaics and natural images share this path."""
    check_image(image)
    x = to_tensor(image, signed=True).to(next(model.parameters()).dtype)
    grid = model.grid(x)[0, 0]
    return DiscriminatorOutput(grid=grid.cpu().numpy(), pooled=float(grid.mean()))
