"""LBP texture descriptor and the nearest-neighbour texture score S(a, b).

Descriptor: 8-neighbour, radius-1 (3x3 ring) local binary patterns on
luminance, with the 58 uniform codes in their own bins and every other code
in one catch-all bin (m = 59), L1-normalized over the interior pixels of a
patch.

Score: ``S(a, b) = mean_j min_i ||h_i - g_j||_2`` where ``h_i`` are the
histograms of ``W`` random patches of ``a`` and ``g_j`` those of ``Z``
random patches of ``b``. The score is directional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_BINS = 59
LUMA = np.array([0.299, 0.587, 0.114])

# circular neighbour order, bit k has weight 2**k
NEIGHBOURS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def _transitions(code: int) -> int:
    bits = [(code >> k) & 1 for k in range(8)]
    return sum(bits[k] != bits[(k + 1) % 8] for k in range(8))


UNIFORM_CODES = tuple(c for c in range(256) if _transitions(c) <= 2)
BIN_OF_CODE = np.full(256, N_BINS - 1, dtype=np.int64)
BIN_OF_CODE[list(UNIFORM_CODES)] = np.arange(len(UNIFORM_CODES))


def luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image @ LUMA


def lbp_codes(gray: np.ndarray) -> np.ndarray:
    """Raw 8-bit LBP codes of all interior pixels, shape (H-2, W-2)."""
    h, w = gray.shape
    if h < 3 or w < 3:
        raise ValueError(f"LBP needs at least a 3x3 region, got {h}x{w}")
    center = gray[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for k, (dr, dc) in enumerate(NEIGHBOURS):
        neighbour = gray[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]
        codes |= (neighbour >= center).astype(np.int64) << k
    return codes


def _histogram(bins: np.ndarray) -> np.ndarray:
    counts = np.bincount(bins.ravel(), minlength=N_BINS).astype(np.float64)
    return counts / counts.sum()


@dataclass
class LbpFeature:
    histogram: np.ndarray
    patch_origin: tuple | None = None


def lbp_histogram(patch: np.ndarray, origin=None) -> LbpFeature:
    codes = lbp_codes(luminance(patch))
    return LbpFeature(_histogram(BIN_OF_CODE[codes]), origin)


@dataclass(frozen=True)
class ScoreConfig:
    patch_size: int = 32
    W: int = 1000
    Z: int = 1000
    seed: int = 1

    def validate(self):
        if self.patch_size < 3:
            raise ValueError(f"patch_size must be >= 3, got {self.patch_size}")
        if self.W < 1 or self.Z < 1:
            raise ValueError(f"W and Z must be >= 1, got W={self.W}, Z={self.Z}")


def sample_origins(shape, patch_size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform (row, col) origins; prefixes agree across counts."""
    h, w = shape[:2]
    if h < patch_size or w < patch_size:
        raise ValueError(f"image {h}x{w} is smaller than patch size {patch_size}")
    return rng.integers(0, [h - patch_size + 1, w - patch_size + 1], size=(count, 2))


def patch_histograms(image: np.ndarray, origins, patch_size: int) -> np.ndarray:
    """Histograms of the patches at ``origins``; shape (len(origins), 59).

    Codes are computed once on the whole image: the interior pixels of a
    patch only compare against neighbours inside that patch.
    """
    bins = BIN_OF_CODE[lbp_codes(luminance(image))]
    inner = patch_size - 2
    out = np.empty((len(origins), N_BINS))
    for k, (r, c) in enumerate(origins):
        out[k] = _histogram(bins[r:r + inner, c:c + inner])
    return out


def nearest_distances(h: np.ndarray, g: np.ndarray, chunk: int = 64) -> np.ndarray:
    """For each row of ``g``, the Euclidean distance to its nearest row of ``h``."""
    out = np.empty(len(g))
    for s in range(0, len(g), chunk):
        diff = g[s:s + chunk, None, :] - h[None, :, :]
        out[s:s + chunk] = np.sqrt((diff * diff).sum(axis=-1)).min(axis=1)
    return out


@dataclass
class ScoreDetails:
    score: float
    minima: np.ndarray
    origins_a: np.ndarray
    origins_b: np.ndarray
    config: ScoreConfig = field(default_factory=ScoreConfig)


def score_details(a: np.ndarray, b: np.ndarray, cfg: ScoreConfig = ScoreConfig()) -> ScoreDetails:
    """S(a, b) with per-patch minima.

    Origins for ``a`` and ``b`` come from two generators seeded identically,
    so equal-sized images are sampled at the same positions.
    """
    cfg.validate()
    p = cfg.patch_size
    origins_a = sample_origins(a.shape, p, cfg.W, np.random.default_rng(cfg.seed))
    origins_b = sample_origins(b.shape, p, cfg.Z, np.random.default_rng(cfg.seed))
    h = patch_histograms(a, origins_a, p)
    g = patch_histograms(b, origins_b, p)
    minima = nearest_distances(h, g)
    return ScoreDetails(float(minima.mean()), minima, origins_a, origins_b, cfg)


def s_score(a: np.ndarray, b: np.ndarray, cfg: ScoreConfig = ScoreConfig()) -> float:
    return score_details(a, b, cfg).score
