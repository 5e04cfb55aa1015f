#!/usr/bin/env python3
"""Run the replay stability-gap experiment at several evaluation periodicities.

Writes one run directory per periodicity (CSV traces plus per-task accuracy
SVGs) and prints the final worst-case metrics. Uses split MNIST when the IDX
files are present under --mnist-dir, otherwise the synthetic split stream.

    python scripts/stability_gap.py --out runs --rho 1 100
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cleval.experiment import read_csv, run_experiment
from cleval.presets import stability_gap_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs", help="output root directory")
    parser.add_argument("--rho", nargs="+", type=int, default=[1, 100],
                        help="evaluation periodicities to run")
    parser.add_argument("--seeds", nargs="+", type=int, default=None)
    parser.add_argument("--mnist-dir", default="data/mnist")
    args = parser.parse_args()

    for rho in args.rho:
        cfg = stability_gap_config(mnist_dir=args.mnist_dir, rho_eval=rho)
        cfg = replace(cfg, output_dir=f"{cfg.output_dir}_rho{rho}")
        if args.seeds:
            cfg = replace(cfg, seeds=tuple(args.seeds))
        print(f"== rho_eval={rho} dataset={cfg.dataset} seeds={cfg.seeds}")
        paths = run_experiment(cfg, output_root=args.out)
        header, rows = read_csv(paths["final"])
        for row in rows:
            print("  " + ", ".join(f"{h}={v}" for h, v in zip(header, row) if v))
    return 0


if __name__ == "__main__":
    sys.exit(main())
