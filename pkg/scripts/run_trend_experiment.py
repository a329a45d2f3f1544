"""Duration trend on the synthetic corpus: 20 vs 100 frames, attention vs average pooling.

    python3 scripts/run_trend_experiment.py [--seeds 0 1 2] [--csv trend.csv]

Takes about half an hour on one CPU core with the defaults.
"""

import argparse
import logging
from dataclasses import replace

from spkcount.experiments import TREND_DATA, TREND_TRAIN, trend_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--frames", type=int, nargs="+", default=[20, 100])
    ap.add_argument("--train-per-class", type=int, default=TREND_DATA.train_per_class)
    ap.add_argument("--epochs", type=int, default=TREND_TRAIN.max_epochs)
    ap.add_argument("--csv", help="write per-run results here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data = replace(TREND_DATA, train_per_class=args.train_per_class)
    res = trend_experiment(seeds=tuple(args.seeds), frame_list=tuple(args.frames), data=data,
                           train_cfg=replace(TREND_TRAIN, max_epochs=args.epochs),
                           on_run=lambda r: print(f"seed {r.seed} frames {r.frames:4d} {r.method:<9} "
                                                  f"WA {100 * r.weighted_accuracy:6.2f}%  "
                                                  f"({r.epochs} epochs, {r.seconds:.0f}s)", flush=True))
    print("\nmean weighted accuracy (%)")
    print("frames  attention  avgpool")
    for f in args.frames:
        print(f"{f:6d}  {100 * res.mean(f, 'attention'):9.2f}  {100 * res.mean(f, 'avgpool'):7.2f}")
    if len(args.frames) >= 2 and len(args.seeds) >= 2:
        for name, ok in res.checks(short=min(args.frames), long=max(args.frames)).items():
            print(f"{name:<26} {'yes' if ok else 'no'}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(res.to_csv())


if __name__ == "__main__":
    main()
