"""Expand a paired dataset with a trained generator, then score masks in a prediction folder.

    python scripts/expand_and_score.py --generator-ckpt runs/desk_gan --data-dir data/train \
        --out runs/expanded --per-sample 3 [--pred-dir preds --gt-dir data/test/GT]
"""
import argparse
from pathlib import Path

from camogen.codmetrics import evaluate_directory
from camogen.dataio import load_dataset
from camogen.synth import expand_from_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--generator-ckpt", type=Path, required=True)
    ap.add_argument("--data-dir", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--per-sample", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--image-size", type=int)
    ap.add_argument("--pred-dir", type=Path)
    ap.add_argument("--gt-dir", type=Path)
    args = ap.parse_args()

    m = expand_from_checkpoint(args.generator_ckpt, load_dataset(args.data_dir), args.per_sample, args.seed,
                               args.out, args.image_size)
    print(f"wrote {len(m.entries)} samples to {args.out}")
    if args.pred_dir and args.gt_dir:
        report = evaluate_directory(args.pred_dir, args.gt_dir)
        print(report.table())


if __name__ == "__main__":
    main()
