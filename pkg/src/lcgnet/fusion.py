"""Position-aligned structure fusion of foreground and background features.

A per-position cosine similarity between (projected, normalized) foreground
and background features gates how much foreground structure survives at each
point; local AdaIN re-dresses the surviving structure in the background's
windowed appearance statistics. Two simpler fusion variants used for
ablation comparisons live here as well.
"""

from __future__ import annotations

import os

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encoder import VAR_EPS, mean_var_normalize
from .saliency import box_filter

DEFAULT_WINDOW = 7

# cosine maps whose spread is below this are treated as uninformative
_DEGENERATE_SPAN = 1e-6


class FusionConvs(nn.Module):
    """The four trainable 1x1, channel-preserving convolutions of the fuser.

    ``sim_fore``/``sim_back`` project the normalized features compared by the
    similarity gate; ``out_fore``/``out_back`` transform the two fused paths.
    Kernels start as identity plus small noise so fusion begins near
    pass-through.
    """

    def __init__(self, channels: int = 512, init_noise: float = 1e-2, seed: int | None = None):
        super().__init__()
        self.channels = channels
        gen = torch.Generator()
        if seed is not None:
            gen.manual_seed(seed)
        for name in ("sim_fore", "sim_back", "out_fore", "out_back"):
            conv = nn.Conv2d(channels, channels, kernel_size=1)
            with torch.no_grad():
                eye = torch.eye(channels).view(channels, channels, 1, 1)
                noise = torch.randn(conv.weight.shape, generator=gen) * init_noise
                conv.weight.copy_(eye + noise)
                conv.bias.zero_()
            self.add_module(name, conv)


def _batched(*tensors: torch.Tensor) -> tuple[list[torch.Tensor], bool]:
    dims = {t.dim() for t in tensors}
    if dims == {3}:
        return [t[None] for t in tensors], True
    if dims == {4}:
        return list(tensors), False
    raise ValueError("feature tensors must all be (C, H, W) or all (B, C, H, W)")


def structure_similarity(
    ff_norm: torch.Tensor, fb_norm: torch.Tensor, convs: FusionConvs
) -> torch.Tensor:
    """Per-position similarity gate between two normalized feature maps.

    Cosine similarity across channels of the two projected maps, min-max
    scaled over spatial positions to [0, 1]. When every position agrees
    (max == min), the gate is 0.5 everywhere: equal trust in both inputs.

    Returns a (1, H, W) map for (C, H, W) inputs, (B, 1, H, W) for batches.
    """
    if ff_norm.shape != fb_norm.shape:
        raise ValueError(f"shape mismatch: {tuple(ff_norm.shape)} vs {tuple(fb_norm.shape)}")
    (ff, fb), squeeze = _batched(ff_norm, fb_norm)
    cos = F.cosine_similarity(convs.sim_fore(ff), convs.sim_back(fb), dim=1, eps=1e-8)
    flat = cos.reshape(cos.shape[0], -1)
    lo = flat.min(dim=1).values.view(-1, 1, 1)
    hi = flat.max(dim=1).values.view(-1, 1, 1)
    span = hi - lo
    degenerate = span <= _DEGENERATE_SPAN
    safe = torch.where(degenerate, torch.ones_like(span), span)
    scaled = (cos - lo) / safe
    scaled = torch.where(degenerate, torch.full_like(scaled, 0.5), scaled)
    out = scaled[:, None]
    return out[0] if squeeze else out


def local_stats(
    feat: torch.Tensor, window: int = DEFAULT_WINDOW, eps: float = VAR_EPS
) -> tuple[torch.Tensor, torch.Tensor]:
    """Windowed per-channel mean and standard deviation at every position.

    The window is ``window`` x ``window`` with replicate padding at borders,
    so every position averages exactly window**2 samples. Population variance,
    epsilon added before the square root. Both outputs match ``feat``'s shape.
    """
    if window % 2 == 0:
        raise ValueError(f"window size must be odd, got {window}")
    mean = box_filter(feat, window)
    sq_mean = box_filter(feat * feat, window)
    var = (sq_mean - mean * mean).clamp_min(0.0)
    return mean, torch.sqrt(var + eps)


def local_adain(
    ff_norm: torch.Tensor, fb: torch.Tensor, window: int = DEFAULT_WINDOW
) -> torch.Tensor:
    """Dress normalized foreground structure in windowed background statistics.

    output_i = std_b(i) * ff_norm_i + mean_b(i), per channel and position,
    with the background statistics taken over a window centered at i.
    """
    if ff_norm.shape != fb.shape:
        raise ValueError(f"shape mismatch: {tuple(ff_norm.shape)} vs {tuple(fb.shape)}")
    mean_b, std_b = local_stats(fb, window)
    return std_b * ff_norm + mean_b


def similarity_gated_fuse(
    ff: torch.Tensor,
    fb: torch.Tensor,
    convs: FusionConvs,
    window: int = DEFAULT_WINDOW,
) -> torch.Tensor:
    """The full fusion: gate locally re-dressed foreground against background.

    A * out_fore(local_adain(norm(ff), fb)) + (1 - A) * out_back(fb), with the
    similarity gate A broadcast across channels. Every output element lies on
    the segment between the two paths by construction.
    """
    if ff.shape != fb.shape:
        raise ValueError(f"shape mismatch: {tuple(ff.shape)} vs {tuple(fb.shape)}")
    (ff4, fb4), squeeze = _batched(ff, fb)
    ff_norm = mean_var_normalize(ff4)
    fb_norm = mean_var_normalize(fb4)
    gate = structure_similarity(ff_norm, fb_norm, convs)
    fore = convs.out_fore(local_adain(ff_norm, fb4, window))
    back = convs.out_back(fb4)
    out = gate * fore + (1.0 - gate) * back
    return out[0] if squeeze else out


def adain_fuse(ff: torch.Tensor, fb: torch.Tensor, eps: float = VAR_EPS) -> torch.Tensor:
    """Ablation variant A: plain adaptive instance normalization.

    Global per-channel statistics: std(fb) * (ff - mean(ff)) / std(ff) + mean(fb).
    """
    if ff.shape != fb.shape:
        raise ValueError(f"shape mismatch: {tuple(ff.shape)} vs {tuple(fb.shape)}")
    mu_f = ff.mean(dim=(-2, -1), keepdim=True)
    mu_b = fb.mean(dim=(-2, -1), keepdim=True)
    std_f = torch.sqrt(ff.var(dim=(-2, -1), unbiased=False, keepdim=True) + eps)
    std_b = torch.sqrt(fb.var(dim=(-2, -1), unbiased=False, keepdim=True) + eps)
    return std_b * (ff - mu_f) / std_f + mu_b


def sum_fuse(ff: torch.Tensor, fb: torch.Tensor, window: int = DEFAULT_WINDOW) -> torch.Tensor:
    """Ablation variant B: sum both normalized structures, then local AdaIN."""
    if ff.shape != fb.shape:
        raise ValueError(f"shape mismatch: {tuple(ff.shape)} vs {tuple(fb.shape)}")
    return local_adain(mean_var_normalize(ff) + mean_var_normalize(fb), fb, window)


def save_similarity_png(gate: torch.Tensor, path: str | os.PathLike) -> None:
    """Dump a similarity gate as a heatmap PNG for inspection."""
    import matplotlib
    from PIL import Image as PILImage

    arr = gate.detach().cpu().numpy()
    while arr.ndim > 2:
        arr = arr[0]
    rgba = matplotlib.colormaps["viridis"](np.clip(arr, 0.0, 1.0))
    PILImage.fromarray((rgba[..., :3] * 255).astype(np.uint8)).save(path)
