"""relu1_1 slice of an ImageNet-pretrained VGG16, used for the content loss.

Two published archive layouts are understood:

* torchvision state dicts (``.pth``/``.pt``), keys ``features.0.weight`` and
  ``features.0.bias``; inputs are RGB normalized by the ImageNet mean/std.
* Keras HDF5 weights (``.h5``), group ``block1_conv1``; these are the
  converted Caffe weights and expect BGR input in [0, 255] minus the
  per-channel pixel mean.

Only conv1_1 is read; deeper layers in the file are ignored.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .imageio import check_image, to_tensor

TORCHVISION = "torchvision-imagenet-rgb-meanstd"
CAFFE = "caffe-bgr-255-meansub"

_TV_MEAN = (0.485, 0.456, 0.406)
_TV_STD = (0.229, 0.224, 0.225)
_CAFFE_MEAN_BGR = (103.939, 116.779, 123.68)

CONV1_1_SHAPE = (64, 3, 3, 3)


class WeightFormatError(ValueError):
    pass


class VggSlice(nn.Module):
    """conv1_1 + ReLU with frozen weights and a fixed input convention."""

    def __init__(self, weight: torch.Tensor, bias: torch.Tensor, preprocessing: str = TORCHVISION):
        super().__init__()
        if preprocessing not in (TORCHVISION, CAFFE):
            raise WeightFormatError(f"unknown preprocessing convention {preprocessing!r}")
        _check_shapes(tuple(weight.shape), tuple(bias.shape))
        self.preprocessing = preprocessing
        self.conv = nn.Conv2d(3, 64, 3, stride=1, padding=1)
        with torch.no_grad():
            self.conv.weight.copy_(weight)
            self.conv.bias.copy_(bias)
        self.requires_grad_(False)
        if preprocessing == TORCHVISION:
            mean, scale = torch.tensor(_TV_MEAN), 1.0 / torch.tensor(_TV_STD)
        else:
            # channel flip to BGR is folded into the conv weights below
            mean, scale = torch.tensor(_CAFFE_MEAN_BGR[::-1]) / 255.0, torch.full((3,), 255.0)
        self.register_buffer("mean", mean.view(1, 3, 1, 1))
        self.register_buffer("scale", scale.view(1, 3, 1, 1))
        if preprocessing == CAFFE:
            with torch.no_grad():
                self.conv.weight.copy_(self.conv.weight.flip(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: B x 3 x H x W RGB in [0, 1]."""
        return torch.relu(self.conv((x - self.mean) * self.scale))


def _check_shapes(w_shape, b_shape):
    if w_shape != CONV1_1_SHAPE:
        raise WeightFormatError(
            f"conv1_1 weight has shape {w_shape}, expected {CONV1_1_SHAPE} (out, in, kh, kw)")
    if b_shape != (64,):
        raise WeightFormatError(f"conv1_1 bias has shape {b_shape}, expected (64,)")


def _load_torch(path: Path):
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # truncated/corrupt archives raise assorted errors
        raise WeightFormatError(f"{path}: cannot read torch archive ({exc})") from exc
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    if not isinstance(state, dict):
        raise WeightFormatError(f"{path}: archive is not a state dict")
    for prefix in ("features.0.", "0.", "vgg.features.0."):
        if prefix + "weight" in state and prefix + "bias" in state:
            w, b = state[prefix + "weight"], state[prefix + "bias"]
            break
    else:
        raise WeightFormatError(f"{path}: no conv1_1 entry (features.0.weight) found")
    _check_shapes(tuple(w.shape), tuple(b.shape))
    return w.float(), b.float(), TORCHVISION


def _load_h5(path: Path):
    import h5py

    try:
        f = h5py.File(path, "r")
    except OSError as exc:
        raise WeightFormatError(f"{path}: cannot read HDF5 archive ({exc})") from exc
    with f:
        root = f["model_weights"] if "model_weights" in f else f
        if "block1_conv1" not in root:
            raise WeightFormatError(f"{path}: no block1_conv1 group found")
        arrays = []
        root["block1_conv1"].visititems(
            lambda _, obj: arrays.append(np.asarray(obj)) if isinstance(obj, h5py.Dataset) else None)
    kernels = [a for a in arrays if a.ndim == 4]
    biases = [a for a in arrays if a.ndim == 1]
    if len(kernels) != 1 or len(biases) != 1:
        raise WeightFormatError(f"{path}: block1_conv1 must hold one kernel and one bias")
    if kernels[0].shape != (3, 3, 3, 64):
        raise WeightFormatError(
            f"block1_conv1 kernel has shape {kernels[0].shape}, expected (3, 3, 3, 64)")
    w = torch.from_numpy(kernels[0]).permute(3, 2, 0, 1).contiguous().float()
    b = torch.from_numpy(biases[0]).float()
    _check_shapes(tuple(w.shape), tuple(b.shape))
    return w, b, CAFFE


def load_vgg_weights(path) -> VggSlice:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"VGG16 weight file not found: {path}")
    if path.suffix.lower() in (".h5", ".hdf5"):
        w, b, tag = _load_h5(path)
    else:
        w, b, tag = _load_torch(path)
    return VggSlice(w, b, tag)


def save_vgg_slice(path, weight: torch.Tensor, bias: torch.Tensor) -> None:
    """Write conv1_1 tensors in the torchvision state-dict layout."""
    _check_shapes(tuple(weight.shape), tuple(bias.shape))
    torch.save({"features.0.weight": weight.detach().clone().float(),
                "features.0.bias": bias.detach().clone().float()}, path)


@torch.no_grad()
def extract(vgg: VggSlice, image: np.ndarray) -> np.ndarray:
    """relu1_1 features of a [0, 1] image as an H x W x 64 array."""
    check_image(image)
    feats = vgg(to_tensor(image))[0]
    return feats.permute(1, 2, 0).cpu().numpy()


def checksum(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
