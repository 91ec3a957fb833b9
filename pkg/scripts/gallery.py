#!/usr/bin/env python3
"""Build side-by-side comparison panels from a trained checkpoint.

Each output row shows: the background with the region outlined, the naive
embedding (masked foreground pasted straight in), and the camouflaged
result. Use it after training to eyeball structure/appearance continuity;
docs/QUALITATIVE_CHECKLIST.md lists what to look for.

Example:
    python scripts/gallery.py --ckpt runs/default/checkpoint_final.pt \
        --fg-dir data/foregrounds --masks-dir data/masks \
        --bg-dir data/backgrounds --out-dir gallery --count 6
"""

import argparse
from pathlib import Path

import numpy as np

from lcgnet import data_io, pipeline
from lcgnet.data_io import RegionRect


def outline(img: np.ndarray, rect: RegionRect, value=(1.0, 0.1, 0.1)) -> np.ndarray:
    out = img.copy()
    t, l, h, w = rect
    out[t : t + h, [l, l + w - 1]] = value
    out[[t, t + h - 1], l : l + w] = value
    return out


def naive_embed(bg: np.ndarray, fg: np.ndarray, mask: np.ndarray, rect: RegionRect) -> np.ndarray:
    region = data_io.crop_region(bg, rect)
    from lcgnet.decoder import embed

    return data_io.paste_region(bg, embed(fg, region, mask), rect)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--vgg", default=None)
    ap.add_argument("--fg-dir", required=True)
    ap.add_argument("--masks-dir", required=True)
    ap.add_argument("--bg-dir", required=True)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--count", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    vgg = args.vgg
    if vgg is None:
        from lcgnet.training import read_checkpoint

        vgg = read_checkpoint(args.ckpt)["config"]["vgg_weights"]
    model = pipeline.load_model(args.ckpt, vgg)

    fgs = data_io.list_images(args.fg_dir)
    bgs = data_io.list_images(args.bg_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    for i in range(args.count):
        fg_path = fgs[int(rng.integers(len(fgs)))]
        bg_path = bgs[int(rng.integers(len(bgs)))]
        fg = data_io.load_image(fg_path)
        mask = data_io.load_mask(data_io.mask_path_for(fg_path, args.masks_dir))
        bg = data_io.load_image(bg_path)
        h, w = fg.shape[:2]
        if bg.shape[0] <= h or bg.shape[1] <= w:
            bg = data_io.resize_image(bg, max(2 * h, bg.shape[0]), max(2 * w, bg.shape[1]))
        top = int(rng.integers(0, bg.shape[0] - h + 1))
        left = int(rng.integers(0, bg.shape[1] - w + 1))
        rect = RegionRect(top, left, h, w)

        result, _, _, _ = pipeline.run_camouflage(model, fg, mask, bg, rect)
        panel = np.concatenate(
            [outline(bg, rect), naive_embed(bg, fg, mask, rect), outline(result, rect)], axis=1
        )
        data_io.save_image(panel, out_dir / f"panel_{i:03d}.png")
        print(f"panel_{i:03d}.png: fg={fg_path.name} bg={bg_path.name} region={rect}")

    print(f"wrote {args.count} panels to {out_dir}; review with docs/QUALITATIVE_CHECKLIST.md")


if __name__ == "__main__":
    main()
