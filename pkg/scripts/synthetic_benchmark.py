"""End-to-end benchmark on a synthetic rectified-Gaussian mixture.

Generates a train/test pair, runs base training plus every online session,
and prints per-session metrics, the final accuracy block, and the state
byte accounting. Everything is seeded; rerunning reproduces the numbers.

    python3 scripts/synthetic_benchmark.py --classes 10 --dim 64 --partition 60+20x2
"""

import argparse
import json
import sys
import time

from proto_ocl.base_trainer import BaseTrainConfig, train_base
from proto_ocl.calibration import CalibrationConfig
from proto_ocl.dataio import gen_synthetic, make_partition, parse_partition_spec
from proto_ocl.evaluation import classify_batch, compute_metrics, state_byte_account
from proto_ocl.numerics import Rng
from proto_ocl.online_learner import LearnerState, OnlineConfig, run_online_session


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--train-per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--partition", default="60+20x2")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--d-hyper", type=int, default=256)
    p.add_argument("--hidden", default="128")
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--K", type=int, default=20)
    return p.parse_args()


def main():
    args = parse_args()
    cal = CalibrationConfig()
    train, test = gen_synthetic(
        args.classes, args.dim, args.train_per_class, args.test_per_class,
        args.separation, args.seed,
    )
    b, s, n = parse_partition_spec(args.partition)
    plan = make_partition(args.classes, b, s, n, args.seed)
    print(f"base classes {plan.base_classes}, sessions {plan.sessions}")

    bcfg = BaseTrainConfig(
        epochs=args.epochs, lr=args.lr, d_hyper=args.d_hyper,
        hidden=tuple(int(h) for h in args.hidden.split(",")),
    )
    t0 = time.perf_counter()
    base = train.restrict(plan.base_classes)
    result = train_base(
        base.features, base.labels, plan.base_classes, bcfg, cal, Rng(args.seed).spawn(1)
    )
    state = LearnerState.from_base(result)
    print(f"base training {result.wall_ms:.0f} ms, "
          f"final epoch loss {result.epoch_losses[-1]['loss_total']:.4f}")

    ocfg = OnlineConfig(T=args.T, k_per_class=args.K)
    for i, classes in enumerate(plan.sessions):
        rec = run_online_session(
            state, train.restrict(classes).samples(), cal, ocfg, Rng(args.seed).spawn(100 + i)
        )
        snap = test.restrict(state.seen_order)
        m = compute_metrics(
            classify_batch(state, snap.features, cal), snap.labels, state.base_classes
        )
        print(
            f"session {rec.session_index}: classes {rec.novel_classes} "
            f"({rec.n_samples} samples, {rec.wall_ms:.0f} ms)  "
            f"loss {rec.loss_trace[0]:.3f}->{rec.loss_trace[-1]:.3f}  "
            f"acc_all {m.acc_all:.1f} base {m.acc_base:.1f} "
            f"novel {m.acc_novel:.1f} hm {m.hm:.1f}"
        )

    covered = test.restrict(plan.all_classes())
    final = compute_metrics(
        classify_batch(state, covered.features, cal), covered.labels, state.base_classes
    )
    print(f"\nfinal: acc_all {final.acc_all:.2f}  base {final.acc_base:.2f}  "
          f"novel {final.acc_novel:.2f}  hm {final.hm:.2f}")
    print("state accounting:", json.dumps(state_byte_account(state)))
    print(f"total wall time {time.perf_counter() - t0:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
