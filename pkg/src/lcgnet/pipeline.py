"""User-facing inference: single and multi-object camouflage, dataset
generation, and the timing benchmark.

Everything here is a single feed-forward pass per generated image. The
locality contract holds end to end: pixels outside the chosen region (and,
inside it, outside the mask) are bit-exact copies of the input background.
"""

from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import data_io
from .data_io import RegionRect, crop_region, paste_region
from .decoder import Decoder, concat_mask, decode, embed
from .encoder import DOWNSAMPLE, VggEncoder, load_encoder, mean_var_normalize
from .errors import RegionConflictError, VersionError
from .fusion import FusionConvs, similarity_gated_fuse, structure_similarity
from .saliency import spectral_residual_saliency
from .training import read_checkpoint


@dataclass
class CamouflageRequest:
    foreground: str
    mask: str
    background: str
    region: RegionRect
    checkpoint: str
    output: str | None = None


def pad_to_multiple(img: np.ndarray, factor: int = DOWNSAMPLE) -> np.ndarray:
    """Reflect-pad an image on the bottom/right edges up to the next multiple.

    Inputs already aligned come back unchanged. Tiny images whose padding
    would exceed their size fall back to edge replication.
    """
    h, w = img.shape[:2]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return img
    pad = ((0, ph), (0, pw)) + ((0, 0),) * (img.ndim - 2)
    mode = "symmetric" if ph < h and pw < w else "edge"
    return np.pad(img, pad, mode=mode)


def pad_mask_to_multiple(mask: np.ndarray, factor: int = DOWNSAMPLE) -> np.ndarray:
    """Zero-pad a mask to the next multiple: padding is never camouflaged."""
    h, w = mask.shape
    ph = (-h) % factor
    pw = (-w) % factor
    if ph == 0 and pw == 0:
        return mask
    return np.pad(mask, ((0, ph), (0, pw)), mode="constant")


class CamouflageModel:
    """Loaded network: frozen encoder plus trained fusion and decoder.

    ``generations`` counts full pipeline passes, ``decoder_forwards`` counts
    decoder invocations via a forward hook; a feed-forward generation
    increases both by exactly one.
    """

    def __init__(self, enc: VggEncoder, decoder: Decoder, fusion: FusionConvs, window: int = 7):
        self.enc = enc
        self.decoder = decoder.eval()
        self.fusion = fusion.eval()
        self.window = window
        self.generations = 0
        self.decoder_forwards = 0
        decoder.register_forward_hook(self._count_decoder)

    def _count_decoder(self, *_):
        self.decoder_forwards += 1

    @torch.no_grad()
    def generate(self, fg: np.ndarray, mask: np.ndarray, bg: np.ndarray):
        """One inference: returns (output image, saliency map, similarity gate).

        ``fg``, ``bg`` are same-size images, ``mask`` the shared binary mask.
        Arbitrary sizes are handled by padding to a multiple of 8 and cropping
        the decoded result back.
        """
        if fg.shape != bg.shape or mask.shape != fg.shape[:2]:
            raise ValueError(
                f"foreground {fg.shape}, background {bg.shape} and mask {mask.shape} must align"
            )
        h, w = fg.shape[:2]
        fg_p = data_io.to_tensor(pad_to_multiple(fg))[None]
        bg_p = data_io.to_tensor(pad_to_multiple(bg))[None]
        mask_p = torch.from_numpy(pad_mask_to_multiple(mask).astype(np.float32))[None]

        ff = self.enc(fg_p)
        fb = self.enc(bg_p)
        sal = spectral_residual_saliency(ff)
        gate = structure_similarity(mean_var_normalize(ff), mean_var_normalize(fb), self.fusion)
        fused = similarity_gated_fuse(ff, fb, self.fusion, self.window)
        io = decode(concat_mask(fused, mask_p), self.decoder)
        io_img = data_io.from_tensor(io[0])[:h, :w]
        self.generations += 1
        return io_img, sal[0], gate[0]


def load_model(checkpoint_path: str | os.PathLike, vgg_path: str | os.PathLike) -> CamouflageModel:
    """Build a CamouflageModel from a training checkpoint and a VGG archive.

    The preprocessing convention recorded at training time must match the
    encoder archive's, otherwise the features would be computed under a
    different convention than the decoder was trained for.
    """
    payload = read_checkpoint(checkpoint_path)
    weights = load_encoder(vgg_path)
    if payload.get("preprocess", "imagenet") != weights.preprocess:
        raise VersionError(
            f"checkpoint was trained with preprocess '{payload.get('preprocess')}' but the "
            f"encoder archive uses '{weights.preprocess}'"
        )
    enc = VggEncoder(weights)
    decoder = Decoder()
    decoder.load_state_dict(payload["decoder"])
    fusion = FusionConvs()
    fusion.load_state_dict(payload["fusion"])
    window = int(payload.get("config", {}).get("window", 7))
    return CamouflageModel(enc, decoder, fusion, window)


def run_camouflage(
    model: CamouflageModel,
    fg: np.ndarray,
    mask: np.ndarray,
    bg_full: np.ndarray,
    rect: RegionRect,
):
    """Camouflage ``fg`` into ``rect`` of the full background.

    Returns (full output image, raw generated patch, saliency, gate).
    """
    if mask.shape != fg.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match foreground {fg.shape[:2]}")
    if (rect.height, rect.width) != fg.shape[:2]:
        raise ValueError(
            f"region {rect.height}x{rect.width} must equal the foreground size {fg.shape[:2]}"
        )
    rect.validate_inside(bg_full.shape[0], bg_full.shape[1])
    bg_region = crop_region(bg_full, rect)
    io_img, sal, gate = model.generate(fg, mask, bg_region)
    composed = embed(io_img, bg_region, mask)
    result = paste_region(bg_full, composed, rect)
    return result, io_img, sal, gate


def camouflage(
    req: CamouflageRequest,
    model: CamouflageModel | None = None,
    vgg_path: str | os.PathLike | None = None,
    dump_saliency: str | None = None,
    dump_similarity: str | None = None,
) -> np.ndarray:
    """Full single-object run from file paths; writes the output PNG if set."""
    if model is None:
        if vgg_path is None:
            raise ValueError("either a loaded model or a VGG archive path is required")
        model = load_model(req.checkpoint, vgg_path)
    fg = data_io.load_image(req.foreground)
    mask = data_io.load_mask(req.mask)
    bg_full = data_io.load_image(req.background)
    result, _io, sal, gate = run_camouflage(model, fg, mask, bg_full, req.region)
    if dump_saliency:
        from .saliency import save_saliency_png

        save_saliency_png(sal, dump_saliency)
    if dump_similarity:
        from .fusion import save_similarity_png

        save_similarity_png(gate, dump_similarity)
    if req.output:
        data_io.save_image(result, req.output)
    return result


def _rects_overlap(a: RegionRect, b: RegionRect) -> bool:
    return not (
        a.left + a.width <= b.left
        or b.left + b.width <= a.left
        or a.top + a.height <= b.top
        or b.top + b.height <= a.top
    )


def camouflage_multi(
    model: CamouflageModel,
    bg_full: np.ndarray,
    items: list[tuple[np.ndarray, np.ndarray, RegionRect]],
) -> np.ndarray:
    """Camouflage several objects into pairwise-disjoint regions, in turn.

    Each step consumes the previous output as its background; because every
    step only touches its own region, earlier results are never disturbed.
    """
    rects = [rect for _, _, rect in items]
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if _rects_overlap(rects[i], rects[j]):
                raise RegionConflictError(
                    f"regions {i} ({rects[i]}) and {j} ({rects[j]}) overlap"
                )
    current = bg_full
    for fg, mask, rect in items:
        current, _, _, _ = run_camouflage(model, fg, mask, current, rect)
    return current


def dataset_generate(
    model: CamouflageModel,
    fg_dir: str | os.PathLike,
    bg_dir: str | os.PathLike,
    out_dir: str | os.PathLike,
    count: int,
    seed: int = 0,
    size: int = 256,
) -> list[dict]:
    """Generate a camouflage dataset: random fg/bg pairings, all-ones mask.

    The raw network output is kept as the final image (no compositing), so
    foregrounds need no masks; the manifest passes each foreground's stem
    through as the label.
    """
    fgs = data_io.list_images(fg_dir)
    bgs = data_io.list_images(bg_dir)
    if not fgs:
        raise ValueError(f"no images under {os.fspath(fg_dir)!r}")
    if not bgs:
        raise ValueError(f"no images under {os.fspath(bg_dir)!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    with open(out_dir / "manifest.jsonl", "w") as manifest:
        for i in range(count):
            fg_path = fgs[int(rng.integers(len(fgs)))]
            bg_path = bgs[int(rng.integers(len(bgs)))]
            fg = data_io.resize_image(data_io.load_image(fg_path), size, size)
            bg = data_io.resize_image(data_io.load_image(bg_path), size, size)
            mask = np.ones((size, size), dtype=np.uint8)
            io_img, _, _ = model.generate(fg, mask, bg)
            out_name = f"cam_{i:05d}.png"
            data_io.save_image(io_img, out_dir / out_name)
            row = {
                "fg": str(fg_path),
                "bg": str(bg_path),
                "label": fg_path.stem,
                "seed": seed,
                "out": out_name,
            }
            manifest.write(json.dumps(row) + "\n")
            rows.append(row)
    return rows


def benchmark(
    model: CamouflageModel,
    sizes: list[tuple[int, int]],
    repeats: int = 5,
    seed: int = 0,
    csv_path: str | os.PathLike | None = None,
) -> list[dict]:
    """Median-of-``repeats`` timing of full generations on synthetic inputs.

    Also verifies the feed-forward contract: each generation must run the
    decoder exactly once.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for h, w in sizes:
        fg = rng.random((h, w, 3)).astype(np.float32)
        bg = rng.random((h, w, 3)).astype(np.float32)
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[h // 4 : 3 * h // 4, w // 4 : 3 * w // 4] = 1
        model.generate(fg, mask, bg)  # warmup
        times = []
        for _ in range(repeats):
            before = model.decoder_forwards
            t0 = time.perf_counter()
            model.generate(fg, mask, bg)
            times.append(time.perf_counter() - t0)
            if model.decoder_forwards - before != 1:
                raise RuntimeError("a generation ran the decoder more than once")
        rows.append({"height": h, "width": w, "seconds": float(np.median(times))})
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write("height,width,seconds\n")
            for row in rows:
                fh.write(f"{row['height']},{row['width']},{row['seconds']:.6f}\n")
    if not torch.cuda.is_available():
        warnings.warn(
            "benchmark ran on CPU; the ~1.12 s/image reference point assumes a GPU",
            RuntimeWarning,
        )
    return rows
