"""Generator mapping fused features (plus a mask channel) back to an image.

The decoder mirrors the encoder layer for layer: nine reflection-padded 3x3
convolutions with ReLU after all but the last, and nearest-neighbor 2x
upsampling at exactly the positions where the encoder pooled (no transposed
convolutions, which would reintroduce checkerboard artifacts). The first
kernel accepts the 512 fused channels plus one mask channel.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encoder import DOWNSAMPLE

FUSED_CHANNELS = 512
DECODER_IN_CHANNELS = FUSED_CHANNELS + 1


class Decoder(nn.Module):
    def __init__(self, seed: int | None = None):
        super().__init__()
        # (in, out, upsample-before) mirroring conv4_1 back through conv1_1
        plan = [
            (DECODER_IN_CHANNELS, 256, False),
            (256, 256, True),
            (256, 256, False),
            (256, 256, False),
            (256, 128, False),
            (128, 128, True),
            (128, 64, False),
            (64, 64, True),
            (64, 3, False),
        ]
        self.upsample_before = [up for _, _, up in plan]
        self.convs = nn.ModuleList(
            nn.Conv2d(cin, cout, kernel_size=3, padding=0) for cin, cout, _ in plan
        )
        gen = torch.Generator()
        if seed is not None:
            gen.manual_seed(seed)
        for conv in self.convs:
            with torch.no_grad():
                fan_in = conv.in_channels * 9
                std = (2.0 / fan_in) ** 0.5
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                conv.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Unclamped decode of a (B, 513, H', W') feature map to (B, 3, 8H', 8W')."""
        for i, conv in enumerate(self.convs):
            if self.upsample_before[i]:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.pad(x, (1, 1, 1, 1), mode="reflect")
            x = conv(x)
            if i < len(self.convs) - 1:
                x = torch.relu(x)
        return x


def downsample_mask(mask: torch.Tensor, factor: int = DOWNSAMPLE) -> torch.Tensor:
    """Nearest downsample of a binary mask by sampling each cell's center pixel.

    Keeps the mask strictly binary. Works on (H, W) or (B, H, W).
    """
    if mask.shape[-2] % factor or mask.shape[-1] % factor:
        raise ValueError(
            f"mask dims {tuple(mask.shape[-2:])} must be multiples of {factor}"
        )
    off = factor // 2
    return mask[..., off::factor, off::factor]


def concat_mask(fused: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Append the downsampled mask as one extra feature channel.

    ``fused`` is (C, H', W') or (B, C, H', W'); ``mask`` is the image-resolution
    binary mask, whose size must be exactly 8x the feature grid.
    """
    squeeze = fused.dim() == 3
    if squeeze:
        fused = fused[None]
        if mask.dim() == 2:
            mask = mask[None]
    if mask.shape[-2] != fused.shape[-2] * DOWNSAMPLE or mask.shape[-1] != fused.shape[-1] * DOWNSAMPLE:
        raise ValueError(
            f"mask size {tuple(mask.shape[-2:])} does not match feature grid "
            f"{tuple(fused.shape[-2:])} at factor {DOWNSAMPLE}"
        )
    md = downsample_mask(mask).to(fused.dtype)[:, None]
    out = torch.cat([fused, md], dim=1)
    return out[0] if squeeze else out


def decode(features: torch.Tensor, decoder: Decoder) -> torch.Tensor:
    """Run the decoder and clamp the output image to [0, 1]."""
    squeeze = features.dim() == 3
    if squeeze:
        features = features[None]
    if features.shape[1] != DECODER_IN_CHANNELS:
        raise ValueError(
            f"decoder expects {DECODER_IN_CHANNELS} input channels, got {features.shape[1]}"
        )
    out = decoder(features).clamp(0.0, 1.0)
    return out[0] if squeeze else out


def embed(io: np.ndarray, ib: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Composite the generated image into the background under the mask.

    output = io * M + ib * (1 - M) per pixel; outside the mask the result is
    a bit-exact copy of ``ib``, which is what makes sequential multi-object
    camouflage safe.
    """
    if io.shape != ib.shape or mask.shape != io.shape[:2]:
        raise ValueError(
            f"embed size mismatch: io {io.shape}, ib {ib.shape}, mask {mask.shape}"
        )
    m = (np.asarray(mask) > 0).astype(io.dtype)[..., None]
    return io * m + ib * (1.0 - m)
