"""Train the camouflage classifier on the contrast toy set and report accuracy.

    python scripts/desk_classifier.py --steps 200 --seed 0 --out runs/desk_clf
"""
import argparse
import time
from pathlib import Path

import torch

from camogen.toydata import contrast_toy_set
from camogen.trainloop import TrainConfig, train_classifier


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-per-class", type=int, default=64)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    torch.set_num_threads(1)
    camo, normal = contrast_toy_set(args.n_per_class, args.size, seed=args.seed)
    cfg = TrainConfig(batch_size=16, image_size=args.size, seed=args.seed, desk_mode=True)
    t0 = time.perf_counter()
    ck = train_classifier(camo, normal, cfg, max_steps=args.steps,
                          on_step=lambda r: print(f"step {r['step']:4d}  loss {r['loss']:.4f}  acc {r['accuracy']:.3f}"))
    print(f"best accuracy {ck.metrics['accuracy']:.3f} at step {ck.metrics['step']} "
          f"({time.perf_counter() - t0:.1f}s)")
    if args.out:
        ck.save(args.out)
        print(f"saved {args.out}")


if __name__ == "__main__":
    main()
