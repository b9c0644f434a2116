"""Image loading/saving and content-dataset indexing.

Every image handled by the package is an ``H x W x 3`` float32 numpy array
with values in ``[0, 1]``. Model-specific ranges are converted at the
module boundaries that need them (``to_tensor``/``from_tensor``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class ImageFormatError(ValueError):
    """Raised when a file exists but cannot be decoded as an image."""


def check_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an image buffer, returning it unchanged."""
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        shape = getattr(image, "shape", None)
        raise ValueError(f"{name} must be an H x W x 3 array, got shape {shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError(f"{name} contains non-finite values")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return image


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                raise ImageFormatError(f"{path}: only 8-bit images are supported")
            rgb = im.convert("RGB")
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable PNG/JPEG") from exc
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    return np.asarray(rgb, dtype=np.float32) / 255.0


def save_image(image: np.ndarray, path) -> None:
    check_image(image)
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {path.parent}")
    data = np.round(image * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    entries: tuple = field(default_factory=tuple)

    @property
    def count(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)


def index_dataset(root, extensions=IMAGE_EXTENSIONS) -> DatasetIndex:
    """List image files under ``root`` (recursively), sorted lexicographically."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"content root is not a directory: {root}")
    exts = {e.lower() if e.startswith(".") else "." + e.lower() for e in extensions}
    found = []
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            if os.path.splitext(name)[1].lower() in exts:
                found.append(Path(dirpath) / name)
    found.sort(key=lambda p: p.relative_to(root).as_posix())
    return DatasetIndex(root=root, entries=tuple(found))


def center_crop_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    """Center-crop so both sides are multiples of ``multiple``."""
    h, w = image.shape[:2]
    nh, nw = (h // multiple) * multiple, (w // multiple) * multiple
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} is smaller than {multiple} pixels")
    top, left = (h - nh) // 2, (w - nw) // 2
    return image[top:top + nh, left:left + nw]


def to_tensor(image: np.ndarray, signed: bool = False) -> torch.Tensor:
    """HxWx3 [0,1] array -> 1x3xHxW tensor, optionally rescaled to [-1,1]."""
    t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)
    t = t.unsqueeze(0)
    return t * 2.0 - 1.0 if signed else t


def from_tensor(tensor: torch.Tensor, signed: bool = False) -> np.ndarray:
    """Inverse of :func:`to_tensor` for a single image (batch dim optional)."""
    t = tensor.detach()
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError("from_tensor expects a single image")
        t = t[0]
    if signed:
        t = (t + 1.0) / 2.0
    arr = t.clamp(0.0, 1.0).permute(1, 2, 0).cpu().numpy().astype(np.float32)
    return np.ascontiguousarray(arr)
