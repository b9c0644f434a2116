"""Patch permutation of a single style image.

A mosaic is built from ``T*T`` random ``n x n`` crops of the style image,
laid out row-major in a ``T x T`` grid, which keeps local texture while
discarding global layout.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .imageio import check_image


class PermutationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PermutationSpec:
    n: int = 9
    T: int = 24
    K: int = 1
    seed: int = 0

    @property
    def side(self) -> int:
        return self.n * self.T

    def validate(self, style: np.ndarray | None = None) -> None:
        if self.n < 1:
            raise PermutationConfigError(f"patch size n must be >= 1, got {self.n}")
        if self.T < 1:
            raise PermutationConfigError(f"grid side T must be >= 1, got {self.T}")
        if self.K < 1:
            raise PermutationConfigError(f"mosaic count K must be >= 1, got {self.K}")
        if style is not None:
            h, w = style.shape[:2]
            if self.n > min(h, w):
                raise PermutationConfigError(
                    f"patch size n={self.n} exceeds style image size {h}x{w}")


@dataclass
class PermutedImage:
    buffer: np.ndarray
    sources: list  # (row, col) origin in the style image, row-major block order
    n: int
    T: int

    def block(self, i: int, j: int) -> np.ndarray:
        n = self.n
        return self.buffer[i * n:(i + 1) * n, j * n:(j + 1) * n]


def crop_origin(height: int, width: int, n: int, r_v: float, r_u: float) -> tuple:
    """Map two uniform draws in [0, 1] to an integer crop origin (row, col).

    The scale is ``size - n + 1`` rather than ``size - n`` so that every
    valid origin, including the last one, is reachable for draws in [0, 1).
    """
    row = min(math.floor((height - n + 1) * r_v), height - n)
    col = min(math.floor((width - n + 1) * r_u), width - n)
    return row, col


def sample_patch(style: np.ndarray, n: int, rng: np.random.Generator):
    h, w = style.shape[:2]
    if n < 1 or n > min(h, w):
        raise PermutationConfigError(f"patch size n={n} exceeds style image size {h}x{w}")
    r_u, r_v = rng.random(2)
    row, col = crop_origin(h, w, n, r_v, r_u)
    return style[row:row + n, col:col + n], (row, col)


def permute(style: np.ndarray, spec: PermutationSpec, rng: np.random.Generator) -> PermutedImage:
    check_image(style, "style")
    spec.validate(style)
    n, T = spec.n, spec.T
    out = np.empty((n * T, n * T, 3), dtype=style.dtype)
    sources = []
    for k in range(T * T):
        patch, origin = sample_patch(style, n, rng)
        i, j = divmod(k, T)
        out[i * n:(i + 1) * n, j * n:(j + 1) * n] = patch
        sources.append(origin)
    return PermutedImage(buffer=out, sources=sources, n=n, T=T)


def mosaic_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for mosaic ``index`` of the stream seeded by ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


class PermutationStream(Sequence):
    """Lazy sequence of ``spec.K`` mosaics; element ``i`` is computed on demand."""

    def __init__(self, style: np.ndarray, spec: PermutationSpec):
        check_image(style, "style")
        spec.validate(style)
        self.style = style
        self.spec = spec

    def __len__(self):
        return self.spec.K

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError(index)
        return permute(self.style, self.spec, mosaic_rng(self.spec.seed, index))


def permutation_stream(style: np.ndarray, spec: PermutationSpec) -> PermutationStream:
    return PermutationStream(style, spec)


def check_provenance(style: np.ndarray, mosaic: PermutedImage) -> bool:
    """True iff every block equals the style region it claims to come from."""
    n, T = mosaic.n, mosaic.T
    if mosaic.buffer.shape[:2] != (n * T, n * T):
        return False
    for k, (row, col) in enumerate(mosaic.sources):
        i, j = divmod(k, T)
        if not np.array_equal(mosaic.block(i, j), style[row:row + n, col:col + n]):
            return False
    return True
