"""Frozen VGG-19 feature extractor through relu4_1.

Four layer taps are exposed: relu1_1/relu2_1/relu3_1/relu4_1 with channel
counts 64/128/256/512 and spatial strides 1/2/4/8 relative to the input
image. Weights come from a named-tensor archive on disk (``convK_J.weight``
/ ``convK_J.bias`` entries, created e.g. by ``lcgnet convert-vgg``) and are
never trained.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import SchemaError

LAYER_TAGS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1")
LAYER_CHANNELS = {"relu1_1": 64, "relu2_1": 128, "relu3_1": 256, "relu4_1": 512}
LAYER_STRIDES = {"relu1_1": 1, "relu2_1": 2, "relu3_1": 4, "relu4_1": 8}
DOWNSAMPLE = 8

# conv name -> (out_channels, in_channels); all kernels are 3x3
CONV_SHAPES = {
    "conv1_1": (64, 3),
    "conv1_2": (64, 64),
    "conv2_1": (128, 64),
    "conv2_2": (128, 128),
    "conv3_1": (256, 128),
    "conv3_2": (256, 256),
    "conv3_3": (256, 256),
    "conv3_4": (256, 256),
    "conv4_1": (512, 256),
}

# conv names after which a 2x2 max pool sits, and the tap emitted just before it
_POOL_AFTER = {"conv1_2", "conv2_2", "conv3_4"}
_TAP_AFTER = {"conv1_1": "relu1_1", "conv2_1": "relu2_1", "conv3_1": "relu3_1", "conv4_1": "relu4_1"}

PREPROCESS_CONVENTIONS = ("imagenet", "caffe_bgr")

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)
_CAFFE_MEAN_BGR = (103.939, 116.779, 123.68)

VAR_EPS = 1e-5  # one epsilon convention for every mean/variance in the repo


@dataclass
class EncoderWeights:
    """Validated, frozen VGG-19 kernels plus the pixel-preprocessing tag."""

    tensors: dict[str, torch.Tensor]
    preprocess: str = "imagenet"
    meta: dict = field(default_factory=dict)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            h.update(name.encode())
            h.update(self.tensors[name].numpy().tobytes())
        return h.hexdigest()


def _validate_archive(tensors: dict[str, torch.Tensor]) -> None:
    for name, (out_c, in_c) in CONV_SHAPES.items():
        wname, bname = f"{name}.weight", f"{name}.bias"
        if wname not in tensors:
            raise SchemaError(f"weight archive is missing tensor '{wname}'")
        if bname not in tensors:
            raise SchemaError(f"weight archive is missing tensor '{bname}'")
        w, b = tensors[wname], tensors[bname]
        if tuple(w.shape) != (out_c, in_c, 3, 3):
            raise SchemaError(
                f"tensor '{wname}' has shape {tuple(w.shape)}, expected {(out_c, in_c, 3, 3)}"
            )
        if tuple(b.shape) != (out_c,):
            raise SchemaError(f"tensor '{bname}' has shape {tuple(b.shape)}, expected {(out_c,)}")


def load_encoder(path: str | os.PathLike) -> EncoderWeights:
    """Load and validate a VGG-19 weight archive (.pt or .npz).

    The archive may carry a ``__meta__`` mapping; its ``preprocess`` key
    selects the pixel convention ('imagenet' mean/std is the default,
    'caffe_bgr' the 0-255 BGR alternative).
    """
    path = os.fspath(path)
    meta: dict = {}
    tensors: dict[str, torch.Tensor] = {}
    if path.endswith(".npz"):
        with np.load(path, allow_pickle=True) as npz:
            for name in npz.files:
                if name == "__meta__":
                    meta = dict(npz[name].item())
                else:
                    tensors[name] = torch.from_numpy(np.asarray(npz[name])).float()
    else:
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if not isinstance(payload, dict):
            raise SchemaError(f"weight archive {path!r} does not contain a tensor mapping")
        meta = dict(payload.pop("__meta__", {}))
        tensors = {k: torch.as_tensor(v).float() for k, v in payload.items()}
    _validate_archive(tensors)
    preprocess = meta.get("preprocess", "imagenet")
    if preprocess not in PREPROCESS_CONVENTIONS:
        raise SchemaError(f"unknown preprocess convention {preprocess!r}")
    tensors = {k: v.clone().requires_grad_(False) for k, v in tensors.items()}
    return EncoderWeights(tensors=tensors, preprocess=preprocess, meta=meta)


class VggEncoder(nn.Module):
    """VGG-19 through relu4_1 with reflection-padded 3x3 convolutions.

    Input images are (B, 3, H, W) in [0, 1] with H, W multiples of 8; the
    preprocessing convention recorded in the weight archive is applied
    internally. All parameters are frozen.
    """

    def __init__(self, weights: EncoderWeights):
        super().__init__()
        self.preprocess = weights.preprocess
        self.convs = nn.ModuleDict()
        for name, (out_c, in_c) in CONV_SHAPES.items():
            conv = nn.Conv2d(in_c, out_c, kernel_size=3, padding=0)
            with torch.no_grad():
                conv.weight.copy_(weights.tensors[f"{name}.weight"])
                conv.bias.copy_(weights.tensors[f"{name}.bias"])
            self.convs[name] = conv
        for p in self.parameters():
            p.requires_grad_(False)
        if self.preprocess == "imagenet":
            mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
            std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        else:
            mean = torch.tensor(_CAFFE_MEAN_BGR).view(1, 3, 1, 1)
            std = torch.ones(1, 3, 1, 1)
        self.register_buffer("pix_mean", mean)
        self.register_buffer("pix_std", std)

    def _preprocess(self, img: torch.Tensor) -> torch.Tensor:
        if self.preprocess == "caffe_bgr":
            img = img.flip(1) * 255.0
        return (img - self.pix_mean) / self.pix_std

    def _run(self, img: torch.Tensor, taps: tuple[str, ...]) -> dict[str, torch.Tensor]:
        if img.dim() == 3:
            img = img[None]
        if img.shape[1] != 3:
            raise ValueError(f"encoder expects 3-channel input, got {img.shape[1]} channels")
        if img.shape[-2] % DOWNSAMPLE or img.shape[-1] % DOWNSAMPLE:
            raise ValueError(
                f"encoder input dims {tuple(img.shape[-2:])} must be multiples of {DOWNSAMPLE}; "
                "pad beforehand"
            )
        x = self._preprocess(img)
        out: dict[str, torch.Tensor] = {}
        last_tap = max(LAYER_TAGS.index(t) for t in taps)
        for name in CONV_SHAPES:
            x = F.pad(x, (1, 1, 1, 1), mode="reflect")
            x = torch.relu(self.convs[name](x))
            tag = _TAP_AFTER.get(name)
            if tag in taps:
                out[tag] = x
                if LAYER_TAGS.index(tag) == last_tap:
                    break
            if name in _POOL_AFTER:
                x = F.max_pool2d(x, kernel_size=2, stride=2)
        return out

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        """relu4_1 features of an image batch."""
        return self._run(img, ("relu4_1",))["relu4_1"]

    def pyramid(self, img: torch.Tensor) -> dict[str, torch.Tensor]:
        """All four layer taps of an image batch, keyed by tag."""
        return self._run(img, LAYER_TAGS)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(p.detach().cpu().numpy().tobytes())
        return h.hexdigest()


def encode(img: torch.Tensor, enc: VggEncoder) -> dict[str, torch.Tensor]:
    """Feature pyramid of ``img`` under the frozen encoder (all four taps)."""
    return enc.pyramid(img)


def mean_var_normalize(feat: torch.Tensor, eps: float = VAR_EPS) -> torch.Tensor:
    """Standardize each channel over its spatial extent (population variance).

    Works on (C, H, W) or (B, C, H, W); shape is preserved. A constant
    channel maps to (approximately) zeros thanks to the epsilon.
    """
    mean = feat.mean(dim=(-2, -1), keepdim=True)
    var = feat.var(dim=(-2, -1), unbiased=False, keepdim=True)
    return (feat - mean) / torch.sqrt(var + eps)


def check_pyramid(pyr: dict[str, torch.Tensor]) -> None:
    """Raise SchemaError unless ``pyr`` holds all four layer tags."""
    for tag in LAYER_TAGS:
        if tag not in pyr:
            raise SchemaError(f"feature pyramid is missing tap '{tag}'")
