"""Spectral-residual saliency over feature maps.

The residual of the log-amplitude spectrum against its local average is
amplified back through the inverse transform; squared magnitudes are summed
over channels. The resulting map marks which points of the foreground
features carry identifiable structure; it weights the immerse loss and
gates the remove loss.
"""

from __future__ import annotations

import os

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage

LOG_EPS = 1e-8  # flat ReLU channels produce zero spectra
DEFAULT_WINDOW = 3

# A constant channel still yields a tiny genuine ripple (its huge amplified
# DC term dominates everything else); variation below this fraction of the
# map's own level carries no information and normalizes to all zeros.
_CONST_REL_TOL = 1e-2


def minmax_normalize(values: torch.Tensor) -> torch.Tensor:
    """Scale a map to [0, 1] per sample; (near-)constant maps become all zeros."""
    flat = values.reshape(values.shape[0], -1) if values.dim() == 3 else values.reshape(1, -1)
    lo = flat.min(dim=1).values
    hi = flat.max(dim=1).values
    span = hi - lo
    scale_ref = torch.maximum(hi.abs(), lo.abs())
    degenerate = span <= _CONST_REL_TOL * scale_ref
    safe_span = torch.where(degenerate, torch.ones_like(span), span)
    shape = (-1,) + (1,) * (values.dim() - 1) if values.dim() == 3 else (1,) * values.dim()
    out = (values - lo.view(shape)) / safe_span.view(shape)
    return torch.where(degenerate.view(shape), torch.zeros_like(out), out)


def box_filter(x: torch.Tensor, window: int) -> torch.Tensor:
    """n x n local average with replicate padding; shape preserved."""
    if window % 2 == 0:
        raise ValueError(f"window size must be odd, got {window}")
    r = window // 2
    squeeze = x.dim() == 3
    if squeeze:
        x = x[None]
    padded = F.pad(x, (r, r, r, r), mode="replicate")
    out = F.avg_pool2d(padded, kernel_size=window, stride=1)
    return out[0] if squeeze else out


def spectral_residual_saliency(
    feat: torch.Tensor, window: int = DEFAULT_WINDOW, log_eps: float = LOG_EPS
) -> torch.Tensor:
    """Saliency map of a feature tensor, min-max normalized to [0, 1].

    Per channel: 2-D Fourier transform; the log-amplitude spectrum minus its
    ``window`` x ``window`` local average forms the residual, which is
    re-exponentiated with the original phase and inverse-transformed. Squared
    magnitudes are summed over channels.

    (C, H, W) input gives an (H, W) map; (B, C, H, W) gives (B, H, W).
    """
    if window % 2 == 0:
        raise ValueError(f"window size must be odd, got {window}")
    squeeze = feat.dim() == 3
    if squeeze:
        feat = feat[None]
    spectrum = torch.fft.fft2(feat)
    amplitude = spectrum.abs()
    phase = torch.angle(spectrum)
    log_amp = torch.log(amplitude + log_eps)
    residual = log_amp - box_filter(log_amp, window)
    recon = torch.polar(torch.exp(residual), phase)
    per_channel = torch.fft.ifft2(recon).abs() ** 2
    # channel order must not influence the result, so reduce in value order
    raw = per_channel.sort(dim=1).values.sum(dim=1)
    out = minmax_normalize(raw)
    return out[0] if squeeze else out


def resize_saliency(sal: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear resize of a normalized saliency map, clamped back to [0, 1]."""
    h, w = size
    if h <= 0 or w <= 0:
        raise ValueError(f"target size must be positive, got {size}")
    squeeze = sal.dim() == 2
    if squeeze:
        sal = sal[None]
    out = F.interpolate(sal[:, None], size=(h, w), mode="bilinear", align_corners=False)
    out = out[:, 0].clamp(0.0, 1.0)
    return out[0] if squeeze else out


def save_saliency_png(sal: torch.Tensor, path: str | os.PathLike) -> None:
    """Dump a saliency map as an 8-bit grayscale PNG for inspection."""
    arr = sal.detach().cpu().numpy()
    if arr.ndim == 3:
        arr = arr[0]
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(q, mode="L").save(path)
