"""Overfit sanity run: can each aggregation variant memorise 40 toy segments?

    python3 scripts/run_overfit.py [--epochs 200] [--seed 0]
"""

import argparse
import logging

from spkcount.experiments import METHODS, overfit_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-class", type=int, default=10)
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--target", type=float, default=0.95)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    print("method      train_acc  epochs  seconds")
    for method in METHODS:
        r = overfit_toy(method, per_class=args.per_class, frames=args.frames, max_epochs=args.epochs,
                        target=args.target, seed=args.seed, batch_size=args.batch_size)
        print(f"{r.method:<10}  {r.train_acc:9.3f}  {r.epochs:6d}  {r.seconds:7.1f}", flush=True)


if __name__ == "__main__":
    main()
