"""Convert torchvision VGG-19 weights into the archive format this package
loads: a flat mapping with ``convK_J.weight`` / ``convK_J.bias`` entries
through conv4_1 plus a ``__meta__`` dict recording the pixel-preprocessing
convention.
"""

from __future__ import annotations

import os

import torch

from .encoder import CONV_SHAPES, load_encoder

# torchvision vgg19 ``features`` indices of the conv layers through conv4_1
_TORCHVISION_INDEX = {
    "conv1_1": 0,
    "conv1_2": 2,
    "conv2_1": 5,
    "conv2_2": 7,
    "conv3_1": 10,
    "conv3_2": 12,
    "conv3_3": 14,
    "conv3_4": 16,
    "conv4_1": 19,
}


def convert_torchvision_vgg(
    out_path: str | os.PathLike,
    source: str | os.PathLike | None = None,
    preprocess: str = "imagenet",
) -> None:
    """Write a weight archive from a torchvision vgg19 state dict.

    ``source`` may be a saved state-dict file; without it, torchvision's
    pretrained snapshot is downloaded (requires network access).
    """
    if source is not None:
        state = torch.load(source, map_location="cpu", weights_only=False)
        if hasattr(state, "state_dict"):
            state = state.state_dict()
    else:
        from torchvision.models import VGG19_Weights, vgg19

        state = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict()

    archive: dict = {"__meta__": {"preprocess": preprocess, "source": "torchvision-vgg19"}}
    for name in CONV_SHAPES:
        idx = _TORCHVISION_INDEX[name]
        for suffix in ("weight", "bias"):
            key = f"features.{idx}.{suffix}"
            if key not in state:
                raise KeyError(f"source state dict is missing '{key}'")
            archive[f"{name}.{suffix}"] = state[key].clone().float()
    torch.save(archive, out_path)
    load_encoder(out_path)  # schema round-trip check
