"""Command-line entry point.

Subcommands: synth (generate a synthetic dataset), train, eval, infer,
stats, serve. Training options come from a preset ("desk" or "paper"),
optionally a flat TOML config file, and individual flag overrides, in that
order of precedence (flags win).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import data as dio
from .checkpoint import load_model
from .config import PRESETS, apply_overrides, load_config_file
from .imageio import read_image
from .server import PORT_ENV, serve
from .synth import SceneSpec, generate_split
from .train import evaluate_split, predict_image, train


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--train", type=int, default=32)
    p.add_argument("--val", type=int, default=8)
    p.add_argument("--test", type=int, default=16)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--count", type=int, default=20,
                   help="objects per scene (fixed unless --count-range)")
    p.add_argument("--count-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--indiscernibility", type=float, default=0.5)
    p.add_argument("--radius", type=float, nargs=2, default=(3.0, 7.0),
                   metavar=("MIN", "MAX"))
    p.add_argument("--min-separation", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")


def _add_train(sub):
    p = sub.add_parser("train", help="train a counting model")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out", default="runs/default",
                   help="directory for checkpoints and the loss log")
    p.add_argument("--config", help="flat TOML config file")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--variant", choices=("density-only", "regression-only",
                                         "dual-tte", "dual-dete"))
    p.add_argument("--layers", type=int, help="transformer layers (L)")
    p.add_argument("--queries", type=int, help="query count (n)")
    p.add_argument("--crop", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lam", type=float, help="density-loss weight")
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-interval", type=int, dest="eval_interval")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--quiet", action="store_true")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float, default=0.35)
    p.add_argument("--json", dest="json_out",
                   help="also write the report as JSON")


def _add_infer(sub):
    p = sub.add_parser("infer", help="predict points for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float, default=0.35)
    p.add_argument("--out", help="prediction JSON path (default: stdout)")


def _add_stats(sub):
    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "val", "test"),
                   help="restrict to one split")


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--port", type=int,
                   default=int(os.environ.get(PORT_ENV, "8008")))
    p.add_argument("--static",
                   help="directory with the built editor UI "
                        "(default: ./frontend/dist when present)")


def cmd_synth(args) -> int:
    template = SceneSpec(width=args.width, height=args.height,
                         count=args.count,
                         indiscernibility=args.indiscernibility,
                         radius_range=tuple(args.radius),
                         min_separation=args.min_separation)
    sizes = {"train": args.train, "val": args.val, "test": args.test}
    manifest = generate_split(template, sizes, args.seed, args.out,
                              count_range=(tuple(args.count_range)
                                           if args.count_range else None),
                              image_format=args.format)
    total = len(manifest.all_files())
    print(f"wrote {total} images to {args.out} "
          f"(train {len(manifest.train)}, val {len(manifest.val)}, "
          f"test {len(manifest.test)})")
    return 0


def cmd_train(args) -> int:
    cfg = load_config_file(args.config) if args.config \
        else PRESETS[args.preset]()
    overrides = {key: getattr(args, key) for key in
                 ("variant", "layers", "queries", "crop", "lr",
                  "weight_decay", "batch_size", "steps", "epochs", "lam",
                  "threshold", "seed", "eval_interval")}
    overrides["dataset_dir"] = args.dataset
    overrides["out_dir"] = args.out
    if args.no_augment:
        overrides["augment"] = False
    cfg = apply_overrides(cfg, overrides)

    def progress(entry):
        if not args.quiet and (entry.step % 50 == 0 or entry.step == 1):
            print(f"step {entry.step:6d}  L_D {entry.l_d:8.4f}  "
                  f"L_c {entry.l_c:8.4f}  L_l {entry.l_l:8.4f}  "
                  f"total {entry.total:8.4f}")

    result = train(cfg, progress=progress)
    print(f"loss log: {result.log_path}")
    print(f"last checkpoint: {result.last_checkpoint}")
    if result.best_checkpoint:
        print(f"best checkpoint: {result.best_checkpoint} "
              f"(val MAE {result.best_val_mae:.3f})")
    return 0


def cmd_eval(args) -> int:
    model, _ = load_model(args.checkpoint)
    report = evaluate_split(model, args.dataset, args.split, args.threshold)
    sys.stdout.write(report.to_text())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json() + "\n")
    return 0


def cmd_infer(args) -> int:
    model, _ = load_model(args.checkpoint)
    image = read_image(args.image)
    merged, count = predict_image(model, image, args.threshold)
    h, w = image.shape[:2]
    doc = {"image": Path(args.image).name, "width": w, "height": h,
           "count": count if merged is None else merged.count,
           "points": []}
    if merged is not None:
        doc["points"] = [
            {"x": float(x), "y": float(y), "difficult": False,
             "score": float(s)}
            for (x, y), s in zip(merged.points, merged.scores)]
    payload = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
    else:
        sys.stdout.write(payload)
    print(f"count: {doc['count']}")
    return 0


def cmd_stats(args) -> int:
    manifest, docs = dio.load_dataset(args.dataset)
    names = manifest.split(args.split) if args.split \
        else manifest.all_files()
    stats = dio.dataset_stats([docs[n] for n in names])
    sys.stdout.write(stats.to_text())
    return 0


def cmd_serve(args) -> int:
    static = args.static
    if static is None and Path("frontend/dist").is_dir():
        static = "frontend/dist"
    serve(args.dataset, args.port, static)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="camocount",
        description="counting camouflaged objects: synthesize, train, "
                    "evaluate, infer, annotate")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_infer(sub)
    _add_stats(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    handler = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
               "infer": cmd_infer, "stats": cmd_stats, "serve": cmd_serve}
    return handler[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
