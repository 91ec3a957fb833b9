"""Image and mask I/O plus the training-pair assembly policy.

Conventions used throughout the package:

- images are float32 numpy arrays of shape (H, W, 3) with values in [0, 1]
- masks are uint8 numpy arrays of shape (H, W) with values in {0, 1}
- the network side works on torch tensors shaped (C, H, W) or (B, C, H, W);
  :func:`to_tensor` / :func:`from_tensor` convert at the boundary

Dataset layout on disk: ``foregrounds/*.png`` with a sibling
``masks/<same-stem>.png`` per foreground, and ``backgrounds/*.{png,jpg}``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage

from .errors import DegenerateMaskError

# three pooling stages in the encoder force this alignment
DOWNSAMPLE_FACTOR = 8

MASK_THRESHOLD = 127  # 8-bit midpoint

TRAIN_BG_SCALE = 2  # background resized to 2x the sample size, then cropped


class RegionRect(NamedTuple):
    """Axis-aligned rectangle inside a full background image."""

    top: int
    left: int
    height: int
    width: int

    def validate_inside(self, height: int, width: int) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"region must have positive size, got {self}")
        if self.top < 0 or self.left < 0 or self.top + self.height > height or self.left + self.width > width:
            raise ValueError(
                f"region {self} does not fit inside a {height}x{width} background"
            )


@dataclass
class TrainSample:
    """One training triple, all at the same square size (256 by default)."""

    foreground: np.ndarray
    mask: np.ndarray
    background: np.ndarray


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Decode an 8-bit image file to a float32 (H, W, 3) array in [0, 1].

    Grayscale inputs are replicated to three channels; alpha is dropped.
    """
    try:
        with PILImage.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode image file {path!r}: {exc}") from exc
    if arr.size == 0 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"image {path!r} has a zero-sized dimension")
    return arr.astype(np.float32) / 255.0


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write a [0, 1] float image as 8-bit PNG (or whatever the suffix says)."""
    img = np.asarray(img, dtype=np.float32)
    quantized = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(quantized).save(path)


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Decode a mask file to a uint8 (H, W) array over {0, 1}.

    Any value above 127 on the 8-bit scale counts as foreground.
    """
    try:
        with PILImage.open(path) as im:
            im = im.convert("L")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot decode mask file {path!r}: {exc}") from exc
    if arr.size == 0:
        raise ValueError(f"mask {path!r} has a zero-sized dimension")
    return (arr > MASK_THRESHOLD).astype(np.uint8)


def save_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    PILImage.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)


def to_tensor(img: np.ndarray) -> torch.Tensor:
    """(H, W, 3) float image -> (3, H, W) float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float()


def from_tensor(t: torch.Tensor) -> np.ndarray:
    """(3, H, W) tensor -> (H, W, 3) float32 array."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError("from_tensor expects a single image")
        t = t[0]
    return t.detach().cpu().permute(1, 2, 0).contiguous().numpy().astype(np.float32)


def resize_image(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a (H, W, 3) float image."""
    if height <= 0 or width <= 0:
        raise ValueError("target size must be positive")
    t = to_tensor(img)[None]
    out = F.interpolate(t, size=(height, width), mode="bilinear", align_corners=False)
    return from_tensor(out[0])


def resize_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize of a binary mask; stays binary."""
    if height <= 0 or width <= 0:
        raise ValueError("target size must be positive")
    t = torch.from_numpy(np.asarray(mask, dtype=np.float32))[None, None]
    out = F.interpolate(t, size=(height, width), mode="nearest")
    return (out[0, 0].numpy() > 0.5).astype(np.uint8)


def make_train_sample(
    fg: np.ndarray,
    mask: np.ndarray,
    bg: np.ndarray,
    rng: np.random.Generator,
    size: int = 256,
) -> TrainSample:
    """Assemble one training triple.

    The foreground and its mask are resized to ``size`` x ``size`` (mask via
    nearest neighbor so it stays binary); the background is resized to twice
    that and a uniformly random crop of ``size`` x ``size`` is taken.

    Raises :class:`DegenerateMaskError` if the mask is empty after resizing.
    """
    fg_r = resize_image(fg, size, size)
    mask_r = resize_mask(mask, size, size)
    if mask_r.sum() == 0:
        raise DegenerateMaskError("mask is empty after resize; sample rejected")
    big = TRAIN_BG_SCALE * size
    bg_big = resize_image(bg, big, big)
    top = int(rng.integers(0, big - size + 1))
    left = int(rng.integers(0, big - size + 1))
    bg_crop = bg_big[top : top + size, left : left + size]
    return TrainSample(foreground=fg_r, mask=mask_r, background=bg_crop)


def crop_region(bg_full: np.ndarray, rect: RegionRect) -> np.ndarray:
    """Exact pixel copy of ``rect`` out of the full background."""
    rect.validate_inside(bg_full.shape[0], bg_full.shape[1])
    return bg_full[rect.top : rect.top + rect.height, rect.left : rect.left + rect.width].copy()


def paste_region(bg_full: np.ndarray, patch: np.ndarray, rect: RegionRect) -> np.ndarray:
    """Return a copy of ``bg_full`` with ``patch`` written into ``rect``.

    Pixels outside the rectangle are bit-exact copies of the input.
    """
    rect.validate_inside(bg_full.shape[0], bg_full.shape[1])
    if patch.shape[:2] != (rect.height, rect.width):
        raise ValueError(
            f"patch size {patch.shape[:2]} does not match region {rect.height}x{rect.width}"
        )
    out = bg_full.copy()
    out[rect.top : rect.top + rect.height, rect.left : rect.left + rect.width] = patch
    return out


def is_gray_image(img: np.ndarray, tol: float = 1.0 / 255.0) -> bool:
    """True when every pixel's channels agree to within ``tol`` (a grayscale image)."""
    spread = img.max(axis=2) - img.min(axis=2)
    return bool((spread < tol).all())


def list_images(directory: str | os.PathLike, exts: tuple[str, ...] = (".png", ".jpg", ".jpeg")) -> list[Path]:
    root = Path(directory)
    return sorted(p for p in root.iterdir() if p.suffix.lower() in exts)


def mask_path_for(fg_path: Path, masks_dir: str | os.PathLike) -> Path:
    return Path(masks_dir) / (fg_path.stem + ".png")
