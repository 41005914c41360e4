"""Per-iteration loss traces of the alternating refinement loop.

Runs one online session for each of a handful of seeds and prints the
loss trace matrix plus its elementwise median, the view used to judge
whether the inner/outer alternation is actually descending.

    python3 scripts/convergence_trace.py --seeds 10 --T 20
"""

import argparse
import sys

import numpy as np

from proto_ocl.base_trainer import BaseTrainConfig, train_base
from proto_ocl.calibration import CalibrationConfig
from proto_ocl.dataio import gen_synthetic
from proto_ocl.numerics import Rng
from proto_ocl.online_learner import LearnerState, OnlineConfig, run_online_session


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--lr-inner", type=float, default=0.1)
    p.add_argument("--lr-outer", type=float, default=0.05)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--base-epochs", type=int, default=3)
    args = p.parse_args()

    cal = CalibrationConfig()
    bcfg = BaseTrainConfig(
        epochs=args.base_epochs, batch_size=64, lr=0.05, d_hyper=128, hidden=(64,)
    )
    ocfg = OnlineConfig(
        T=args.T, k_per_class=args.K, lr_inner=args.lr_inner, lr_outer=args.lr_outer
    )

    traces = []
    for s in range(args.seeds):
        train, _ = gen_synthetic(8, args.dim, 60, 2, 1.0, seed=1000 + s)
        base = train.restrict([0, 1, 2, 3, 4])
        res = train_base(
            base.features, base.labels, [0, 1, 2, 3, 4], bcfg, cal, Rng(s).spawn(1)
        )
        state = LearnerState.from_base(res)
        rec = run_online_session(
            state, train.restrict([5, 6, 7]).samples(), cal, ocfg, Rng(s).spawn(100)
        )
        traces.append(rec.loss_trace)
        print(f"seed {s:2d}: " + " ".join(f"{v:.3f}" for v in rec.loss_trace))

    med = np.median(np.asarray(traces), axis=0)
    print("median : " + " ".join(f"{v:.3f}" for v in med))
    n_desc = sum(t[-1] <= t[0] for t in traces)
    print(f"final <= initial in {n_desc}/{len(traces)} runs; "
          f"median {med[0]:.3f} -> {med[-1]:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
