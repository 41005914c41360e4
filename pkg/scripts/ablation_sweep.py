"""Hyperparameter ablations over the online loop, written as CSV files.

Sweeps the refinement iteration count T, the per-class pseudo-feature
count K, and the power-transform exponent on a shared synthetic dataset,
one CSV per axis. Thin wrapper over the `proto-ocl sweep` subcommand so
the rows match what the CLI would produce.

    python3 scripts/ablation_sweep.py --out-dir runs/ablations
"""

import argparse
import sys
from pathlib import Path

from proto_ocl.cli import main as cli_main

AXES = {
    "T": "1,5,10,20",
    "K": "5,10,20,40",
    "lambda": "0.25,0.5,0.75,1.0",
}

FAST_FLAGS = [
    "--epochs", "15", "--lr", "0.05", "--d-hyper", "128", "--hidden", "64",
]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="runs/ablations")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--separation", type=float, default=0.55)
    p.add_argument("--partition", default="60+20x2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1)
    args = p.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rc = cli_main([
        "gen-data", "--classes", str(args.classes), "--dim", str(args.dim),
        "--train-per-class", "100", "--test-per-class", "50",
        "--separation", str(args.separation), "--seed", str(args.seed),
        "--out", str(out / "data"),
    ])
    if rc != 0:
        return rc

    for param, values in AXES.items():
        csv_path = out / f"sweep_{param}.csv"
        rc = cli_main([
            "sweep",
            "--train", str(out / "data" / "train.fvec"),
            "--test", str(out / "data" / "test.fvec"),
            "--partition", args.partition, "--seed", str(args.seed),
            *FAST_FLAGS,
            "--param", param, "--values", values,
            "--out", str(csv_path), "--parallel", str(args.parallel),
        ])
        if rc != 0:
            return rc
        print(f"{param}: {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
