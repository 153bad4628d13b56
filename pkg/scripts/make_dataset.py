#!/usr/bin/env python3
"""Generate a synthetic regression CSV shaped like the Abalone benchmark.

The real dataset (4177 rows) can be used instead via `sparsegossip ingest`;
this script produces a drop-in surrogate when the file is not at hand.
"""

import argparse
from pathlib import Path

from sparsegossip import datasets


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=4177)
    parser.add_argument("--dim", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise-std", type=float, default=0.5)
    parser.add_argument("--out", default="abalone_like.csv")
    args = parser.parse_args()

    features, targets = datasets.synthetic_regression(
        args.rows, args.dim, seed=args.seed, noise_std=args.noise_std
    )
    datasets.write_csv(args.out, features, targets)
    print(f"wrote {args.rows} rows x {args.dim} features to {Path(args.out).resolve()}")


if __name__ == "__main__":
    main()
