"""Independent reference implementations used to check the package.

Everything here is written as literally as possible: explicit loops, direct
DFT sums, clamped-index windows. Slow on purpose; never import from these
into the package.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def direct_dft2(x: np.ndarray) -> np.ndarray:
    """O(N^4) forward DFT of a 2-D real array."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for r in range(h):
                for c in range(w):
                    acc += x[r, c] * cmath.exp(-2j * math.pi * (u * r / h + v * c / w))
            out[u, v] = acc
    return out


def direct_idft2(x: np.ndarray) -> np.ndarray:
    """O(N^4) inverse DFT (1/HW normalization)."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for r in range(h):
        for c in range(w):
            acc = 0.0 + 0.0j
            for u in range(h):
                for v in range(w):
                    acc += x[u, v] * cmath.exp(2j * math.pi * (u * r / h + v * c / w))
            out[r, c] = acc / (h * w)
    return out


def box_filter_replicate(x: np.ndarray, window: int) -> np.ndarray:
    """n x n local average with index clamping (replicate padding)."""
    h, w = x.shape
    r = window // 2
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    acc += x[ii, jj]
            out[i, j] = acc / (window * window)
    return out


def minmax_normalize(x: np.ndarray, rel_tol: float = 1e-2) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    span = hi - lo
    if span <= rel_tol * max(abs(hi), abs(lo)):
        return np.zeros_like(x)
    return (x - lo) / span


def spectral_residual_oracle(
    feat: np.ndarray, window: int = 3, log_eps: float = 1e-8
) -> np.ndarray:
    """Literal per-channel spectral residual over a (C, H, W) array, normalized."""
    c, h, w = feat.shape
    total = np.zeros((h, w), dtype=np.float64)
    for k in range(c):
        spectrum = direct_dft2(feat[k].astype(np.float64))
        amp = np.abs(spectrum)
        phase = np.angle(spectrum)
        log_amp = np.log(amp + log_eps)
        residual = log_amp - box_filter_replicate(log_amp, window)
        recon = np.exp(residual) * np.exp(1j * phase)
        total += np.abs(direct_idft2(recon)) ** 2
    return minmax_normalize(total)


def windowed_stats_oracle(
    feat: np.ndarray, window: int, eps: float = 1e-5
) -> tuple[np.ndarray, np.ndarray]:
    """Loop windowed mean/std of a (C, H, W) array under replicate padding."""
    c, h, w = feat.shape
    r = window // 2
    mean = np.zeros_like(feat, dtype=np.float64)
    std = np.zeros_like(feat, dtype=np.float64)
    for k in range(c):
        for i in range(h):
            for j in range(w):
                vals = []
                for di in range(-r, r + 1):
                    for dj in range(-r, r + 1):
                        ii = min(max(i + di, 0), h - 1)
                        jj = min(max(j + dj, 0), w - 1)
                        vals.append(float(feat[k, ii, jj]))
                vals = np.asarray(vals)
                m = vals.mean()
                v = ((vals - m) ** 2).mean()
                mean[k, i, j] = m
                std[k, i, j] = math.sqrt(v + eps)
    return mean, std


def cosine_map_oracle(a: np.ndarray, b: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Per-position channel cosine similarity of two (C, H, W) arrays."""
    c, h, w = a.shape
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            va, vb = a[:, i, j], b[:, i, j]
            na = max(np.linalg.norm(va), eps)
            nb = max(np.linalg.norm(vb), eps)
            out[i, j] = float(np.dot(va, vb)) / (na * nb)
    return out


def immerse_oracle(
    fo: np.ndarray, ff: np.ndarray, sal: np.ndarray, mask_d: np.ndarray
) -> float:
    """All-pairs double loop over positions of (C, H, W) normalized features."""
    c, h, w = fo.shape
    n = h * w
    fo2 = fo.reshape(c, n)
    ff2 = ff.reshape(c, n)
    s = sal.reshape(n)
    g = mask_d.reshape(n) > 0
    total = 0.0
    count = 0
    for i in range(n):
        for j in range(n):
            if i == j or not (g[i] or g[j]):
                continue
            diff = (fo2[:, i] - fo2[:, j]) - (ff2[:, i] - ff2[:, j])
            total += float(np.linalg.norm(diff)) * (s[i] + s[j])
            count += 1
    if count == 0:
        return 0.0
    return total / count


def bilinear_resize_oracle(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Closed-form bilinear resize, half-pixel-center convention, edge clamped."""
    in_h, in_w = src.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        for ox in range(out_w):
            sy = (oy + 0.5) * in_h / out_h - 0.5
            sx = (ox + 0.5) * in_w / out_w - 0.5
            sy = min(max(sy, 0.0), in_h - 1.0)
            sx = min(max(sx, 0.0), in_w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, in_h - 1), min(x0 + 1, in_w - 1)
            wy, wx = sy - y0, sx - x0
            out[oy, ox] = (
                src[y0, x0] * (1 - wy) * (1 - wx)
                + src[y0, x1] * (1 - wy) * wx
                + src[y1, x0] * wy * (1 - wx)
                + src[y1, x1] * wy * wx
            )
    return out


def finite_difference_grad(fn, tensor, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one torch tensor.

    Perturbs ``tensor.data`` in place entry by entry; the tensor must be
    float64 for the stated tolerances to be meaningful.
    """
    flat = tensor.data.reshape(-1)
    grad = np.zeros(flat.numel(), dtype=np.float64)
    for idx in range(flat.numel()):
        orig = float(flat[idx])
        flat[idx] = orig + eps
        hi = float(fn())
        flat[idx] = orig - eps
        lo = float(fn())
        flat[idx] = orig
        grad[idx] = (hi - lo) / (2 * eps)
    return grad.reshape(tuple(tensor.shape))
