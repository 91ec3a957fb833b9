"""The four training losses and their weighted total.

All losses are normalized by their element or pair counts so the default
weights behave consistently across resolutions. One algebraic identity is
used throughout the immerse loss: the contrast difference
(Fo_i - Fo_j) - (Ff_i - Ff_j) equals D_i - D_j for D = Fo - Ff, so only the
single difference map is ever materialized.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import torch

from .encoder import LAYER_TAGS, check_pyramid
from .fusion import local_stats
from .saliency import resize_saliency

from .errors import LossNanError

# keeps the pair-norm gradient finite when a pair difference is exactly zero
_NORM_GUARD = 1e-24


@dataclass
class LossWeights:
    """Weights of the four loss terms (defaults are the trained operating point)."""

    immerse: float = 1.2e4
    remove: float = 1.0e2
    bpa: float = 1.0e2
    tv: float = 5.0e-2


@dataclass
class LossReport:
    """Scalar snapshot of one step's loss terms, for logging."""

    total: float
    immerse: float
    remove: float
    bpa: float
    tv: float

    def to_dict(self) -> dict[str, float]:
        return {
            "total": self.total,
            "immerse": self.immerse,
            "remove": self.remove,
            "bpa": self.bpa,
            "tv": self.tv,
        }


def _pair_norms(d_rows: torch.Tensor, d_all: torch.Tensor) -> torch.Tensor:
    diff = d_rows[:, None, :] - d_all[None, :, :]
    sq = diff.pow(2).sum(dim=-1)
    return torch.sqrt(sq.clamp_min(_NORM_GUARD))


def immerse_loss(
    fo_norm: torch.Tensor,
    ff_norm: torch.Tensor,
    sal: torch.Tensor,
    mask_d: torch.Tensor,
    tile: int = 128,
    pair_sample_k: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Contrast-difference loss over position pairs of the feature grid.

    For every ordered pair (i, j != i) with mask_d_i OR mask_d_j set, the
    channel-vector norm of the contrast difference between the output and
    foreground features is weighted by (S_i + S_j); the sum is divided by
    the number of qualifying pairs. With ``pair_sample_k`` set, a uniform
    sample (without replacement) of qualifying pairs estimates the same mean.

    Inputs are normalized relu4_1 maps (C, H, W) or batches (B, C, H, W);
    ``sal`` and ``mask_d`` follow with (H, W) / (B, H, W). Batches average
    the per-sample losses.
    """
    if fo_norm.dim() == 4:
        losses = [
            immerse_loss(
                fo_norm[b], ff_norm[b], sal[b], mask_d[b],
                tile=tile, pair_sample_k=pair_sample_k, generator=generator,
            )
            for b in range(fo_norm.shape[0])
        ]
        return torch.stack(losses).mean()

    if fo_norm.shape != ff_norm.shape:
        raise ValueError(f"shape mismatch: {tuple(fo_norm.shape)} vs {tuple(ff_norm.shape)}")
    c, h, w = fo_norm.shape
    if sal.shape != (h, w) or mask_d.shape != (h, w):
        raise ValueError("saliency and mask must live on the feature grid")

    d = (fo_norm - ff_norm).reshape(c, -1).transpose(0, 1)  # (N, C)
    s = sal.reshape(-1)
    gate = mask_d.reshape(-1) > 0
    n = d.shape[0]

    k = int(gate.sum())
    if k == 0:
        warnings.warn("immerse loss: mask is empty, no pair qualifies", RuntimeWarning)
        return d.sum() * 0.0
    # ordered pairs with the OR gate set, diagonal excluded
    n_pairs = n * n - (n - k) * (n - k) - k

    if pair_sample_k is not None:
        pair_gate = gate[:, None] | gate[None, :]
        pair_gate.fill_diagonal_(False)
        idx = pair_gate.reshape(-1).nonzero(as_tuple=False).squeeze(1)
        take = min(pair_sample_k, idx.numel())
        perm = torch.randperm(idx.numel(), generator=generator)[:take]
        chosen = idx[perm]
        ii, jj = chosen // n, chosen % n
        norms = torch.sqrt((d[ii] - d[jj]).pow(2).sum(dim=-1).clamp_min(_NORM_GUARD))
        weights = s[ii] + s[jj]
        return (norms * weights).mean()

    total = d.new_zeros(())
    for start in range(0, n, tile):
        stop = min(start + tile, n)
        rows = slice(start, stop)
        norms = _pair_norms(d[rows], d)
        weights = (s[rows, None] + s[None, :]) * (gate[rows, None] | gate[None, :])
        # exclude the diagonal (i == j) of this tile
        local = torch.arange(start, stop, device=d.device)
        weights[local - start, local] = 0.0
        total = total + (norms * weights).sum()
    return total / n_pairs


def remove_loss(
    pyr_o: dict[str, torch.Tensor],
    pyr_b: dict[str, torch.Tensor],
    sal: torch.Tensor,
) -> torch.Tensor:
    """Saliency-gated reconstruction pull toward the background, all four taps.

    Per layer, the Frobenius norm of (1 - S) * (Fo - Fb) with S bilinearly
    resized to the layer grid and broadcast across channels, normalized by
    the layer's element count; layers are weighted equally.
    """
    check_pyramid(pyr_o)
    check_pyramid(pyr_b)
    total = None
    for tag in LAYER_TAGS:
        fo, fb = pyr_o[tag], pyr_b[tag]
        if fo.shape != fb.shape:
            raise ValueError(f"layer '{tag}' shapes differ: {tuple(fo.shape)} vs {tuple(fb.shape)}")
        squeeze = fo.dim() == 3
        if squeeze:
            fo, fb = fo[None], fb[None]
        s_l = resize_saliency(sal if sal.dim() == 3 else sal[None], fo.shape[-2:])
        gated = (1.0 - s_l[:, None]) * (fo - fb)
        count = gated[0].numel()
        per_sample = torch.sqrt(gated.pow(2).sum(dim=(1, 2, 3)).clamp_min(_NORM_GUARD)) / count
        term = per_sample.mean()
        total = term if total is None else total + term
    return total


def bpa_loss(
    pyr_o: dict[str, torch.Tensor],
    pyr_b: dict[str, torch.Tensor],
    window: int = 7,
) -> torch.Tensor:
    """Windowed appearance match between output and background features.

    Per layer and position, absolute differences of the window mean and
    window standard deviation, summed over channels and positions and
    normalized by the layer's element count; layers weighted equally.
    """
    check_pyramid(pyr_o)
    check_pyramid(pyr_b)
    total = None
    for tag in LAYER_TAGS:
        fo, fb = pyr_o[tag], pyr_b[tag]
        if fo.shape != fb.shape:
            raise ValueError(f"layer '{tag}' shapes differ: {tuple(fo.shape)} vs {tuple(fb.shape)}")
        squeeze = fo.dim() == 3
        if squeeze:
            fo, fb = fo[None], fb[None]
        mu_o, std_o = local_stats(fo, window)
        mu_b, std_b = local_stats(fb, window)
        count = fo[0].numel()
        per_sample = ((mu_o - mu_b).abs() + (std_o - std_b).abs()).sum(dim=(1, 2, 3)) / count
        term = per_sample.mean()
        total = term if total is None else total + term
    return total


def tv_loss(img: torch.Tensor) -> torch.Tensor:
    """Total-variation smoothness of an image, normalized by pixel count."""
    squeeze = img.dim() == 3
    if squeeze:
        img = img[None]
    pixels = img.shape[-2] * img.shape[-1]
    dh = (img[..., :, 1:] - img[..., :, :-1]).pow(2).sum(dim=(1, 2, 3))
    dv = (img[..., 1:, :] - img[..., :-1, :]).pow(2).sum(dim=(1, 2, 3))
    return ((dh + dv) / pixels).mean()


def total_loss(
    immerse: torch.Tensor | float,
    remove: torch.Tensor | float,
    bpa: torch.Tensor | float,
    tv: torch.Tensor | float,
    weights: LossWeights,
) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum of the four terms plus a float snapshot for logging.

    Raises :class:`LossNanError` naming the first non-finite term.
    """
    parts = {"immerse": immerse, "remove": remove, "bpa": bpa, "tv": tv}
    vals = {}
    for name, part in parts.items():
        value = float(part.detach()) if torch.is_tensor(part) else float(part)
        if not math.isfinite(value):
            raise LossNanError(name)
        vals[name] = value
    total = (
        weights.immerse * immerse
        + weights.remove * remove
        + weights.bpa * bpa
        + weights.tv * tv
    )
    report_total = float(total.detach()) if torch.is_tensor(total) else float(total)
    report = LossReport(total=report_total, **vals)
    if not torch.is_tensor(total):
        total = torch.tensor(report_total, dtype=torch.float64)
    return total, report
