#!/usr/bin/env python3
"""Drain skill as a function of training set size.

Cuts the tree fixture's training split down to the most recent N
examples (test tail fixed) and trains both model kinds at each size.
The gap between the tree model and the flat baseline should be widest
at the smallest sizes, where shared weights matter most.
"""

import argparse

from hydronets.experiments import ExperimentConfig, run_scarcity
from hydronets.model import Dims
from hydronets.presets import tree_fixture
from hydronets.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/scarcity")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sizes", nargs="+", type=int, default=[200, 800, 3200])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        dims=Dims(window=24, embedding=4, horizon=2),
        train=TrainConfig(learning_rate=0.01, epochs=60, batch_size=64),
        seeds=tuple(range(args.seeds)),
        metric="r2_persist",
        out_dir=args.out,
        synth=tree_fixture(),
        train_frac=0.85,
        sizes=tuple(args.sizes),
        basins=("b0",),
        workers=args.workers,
    )
    table = run_scarcity(cfg)
    for row in table.rows:
        print(f"{row.key:12s} {row.model:10s} {row.mean:+.4f} (std {row.std:.4f})")
    print(f"report in {args.out}/")


if __name__ == "__main__":
    main()
