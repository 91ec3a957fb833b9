"""Command-line interface.

Subcommands: train, camouflage, multi, datagen, bench, convert-vgg.
Exit codes: 0 success, 1 runtime error, 2 bad input, 3 checkpoint/version
mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data_io import RegionRect
from .errors import RegionConflictError, SchemaError, VersionError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcgnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a YAML config file")
    p.add_argument("--config", required=True)

    p = sub.add_parser("camouflage", help="hide one object in a background region")
    p.add_argument("--fg", required=True, help="foreground image")
    p.add_argument("--mask", required=True, help="binary mask matching the foreground")
    p.add_argument("--bg", required=True, help="full background image")
    p.add_argument("--top", type=int, required=True)
    p.add_argument("--left", type=int, required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vgg", default=None, help="encoder archive (default: path from checkpoint)")
    p.add_argument("--dump-saliency", default=None, help="write the saliency map PNG here")
    p.add_argument("--dump-similarity", default=None, help="write the similarity heatmap PNG here")

    p = sub.add_parser("multi", help="camouflage several objects, regions from a JSONL spec")
    p.add_argument("--spec", required=True, help="JSONL rows: {fg, mask, top, left}")
    p.add_argument("--bg", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vgg", default=None)

    p = sub.add_parser("datagen", help="generate a camouflage dataset (all-ones mask)")
    p.add_argument("--fg-dir", required=True)
    p.add_argument("--bg-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vgg", default=None)

    p = sub.add_parser("bench", help="time full generations at several sizes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vgg", default=None)
    p.add_argument("--sizes", default="256x256,512x512", help="comma list of HxW")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--csv", default=None)

    p = sub.add_parser("convert-vgg", help="build an encoder archive from torchvision weights")
    p.add_argument("--out", required=True)
    p.add_argument("--source", default=None, help="saved vgg19 state dict (else download)")
    p.add_argument("--preprocess", default="imagenet", choices=("imagenet", "caffe_bgr"))

    return parser


def _vgg_path(args) -> str:
    if args.vgg:
        return args.vgg
    from .training import read_checkpoint

    path = read_checkpoint(args.ckpt).get("config", {}).get("vgg_weights", "")
    if not path:
        raise ValueError("no --vgg given and the checkpoint records no encoder archive path")
    return path


def _run(args) -> None:
    if args.command == "train":
        from .training import TrainConfig, train_loop

        final = train_loop(TrainConfig.from_file(args.config))
        print(f"final checkpoint: {final}")

    elif args.command == "camouflage":
        from . import data_io, pipeline

        fg = data_io.load_image(args.fg)
        rect = RegionRect(args.top, args.left, fg.shape[0], fg.shape[1])
        req = pipeline.CamouflageRequest(
            foreground=args.fg, mask=args.mask, background=args.bg,
            region=rect, checkpoint=args.ckpt, output=args.out,
        )
        pipeline.camouflage(
            req, vgg_path=_vgg_path(args),
            dump_saliency=args.dump_saliency, dump_similarity=args.dump_similarity,
        )
        print(f"wrote {args.out}")

    elif args.command == "multi":
        from . import data_io, pipeline

        model = pipeline.load_model(args.ckpt, _vgg_path(args))
        bg_full = data_io.load_image(args.bg)
        items = []
        with open(args.spec) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                fg = data_io.load_image(row["fg"])
                mask = data_io.load_mask(row["mask"])
                rect = RegionRect(int(row["top"]), int(row["left"]), fg.shape[0], fg.shape[1])
                items.append((fg, mask, rect))
        result = pipeline.camouflage_multi(model, bg_full, items)
        data_io.save_image(result, args.out)
        print(f"wrote {args.out} ({len(items)} objects)")

    elif args.command == "datagen":
        from . import pipeline

        model = pipeline.load_model(args.ckpt, _vgg_path(args))
        rows = pipeline.dataset_generate(
            model, args.fg_dir, args.bg_dir, args.out_dir,
            count=args.count, seed=args.seed, size=args.size,
        )
        print(f"wrote {len(rows)} images and manifest.jsonl under {args.out_dir}")

    elif args.command == "bench":
        from . import pipeline

        sizes = []
        for token in args.sizes.split(","):
            h, w = token.lower().split("x")
            sizes.append((int(h), int(w)))
        model = pipeline.load_model(args.ckpt, _vgg_path(args))
        rows = pipeline.benchmark(model, sizes, repeats=args.repeats, csv_path=args.csv)
        print("height,width,seconds")
        for row in rows:
            print(f"{row['height']},{row['width']},{row['seconds']:.4f}")
        print("reference point: ~1.12 s/image average on a 1080Ti-class GPU")

    elif args.command == "convert-vgg":
        from .convert import convert_torchvision_vgg

        convert_torchvision_vgg(args.out, source=args.source, preprocess=args.preprocess)
        print(f"wrote {args.out}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _run(args)
    except VersionError as exc:
        print(f"version error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, SchemaError, RegionConflictError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
