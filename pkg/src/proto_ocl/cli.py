"""Command-line front door.

Subcommands: gen-data, base-train, online-run, run, sweep, bench, eval.
Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
malformed inputs, partition arithmetic), 3 numeric failure (a NaN or
infinity surfaced during training; the run aborts rather than emitting
corrupt metrics).

Reports are JSON with sorted keys. Rerunning with identical inputs and
seed reproduces a report byte for byte except for wall-clock fields;
stable_report_view strips those volatile fields for comparisons.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .base_trainer import BaseTrainConfig, train_base
from .calibration import CalibrationConfig
from .checkpoint import (
    CheckpointBundle,
    load_checkpoint,
    save_checkpoint,
    state_payload_bytes,
)
from .dataio import (
    FeatureSet,
    FormatError,
    gen_synthetic,
    make_partition,
    parse_partition_spec,
    read_fvec,
    write_fvec,
    write_meta,
)
from .evaluation import classify_batch, compute_metrics, state_byte_account
from .numerics import NumericFailure, Rng, check_finite
from .online_learner import LearnerState, OnlineConfig, run_online_session

SWEEP_PARAMS = ("lambda", "T", "K", "k_base", "k_novel", "dh")
CSV_COLUMNS = ("value", "acc_all", "acc_base", "acc_novel", "hm", "time_ms", "state_bytes")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_data_flags(p, need_test=True):
    p.add_argument("--train", required=True, help="training FVEC file")
    p.add_argument("--test", required=need_test, help="test FVEC file")
    p.add_argument("--partition", required=True, help='partition spec "B+SxN", integer percents')
    p.add_argument("--seed", type=int, default=0)


def _add_cal_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="power-transform exponent")
    p.add_argument("--var-floor", type=float, default=1e-6)


def _add_base_flags(p):
    p.add_argument("--loss", choices=("ce", "sc"), default="ce")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--d-hyper", type=int, default=2048)
    p.add_argument("--hidden", default="512", help="comma-separated hidden widths")


def _add_online_flags(p):
    p.add_argument("--T", type=int, default=20, help="bi-level iterations per session")
    p.add_argument("--K", dest="k_per_class", type=int, default=20, help="pseudo-features per class")
    p.add_argument("--k-base", type=int, default=None)
    p.add_argument("--k-novel", type=int, default=None)
    p.add_argument("--lr-inner", type=float, default=0.05)
    p.add_argument("--lr-outer", type=float, default=0.01)
    p.add_argument("--stream-batch", type=int, default=10)
    p.add_argument("--temperature-cls", type=float, default=0.1)
    p.add_argument("--freeze-base-prototypes", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="proto-ocl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"proto-ocl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic FVEC train/test pair")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--train-per-class", type=int, required=True)
    p.add_argument("--test-per-class", type=int, required=True)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("base-train", help="offline base-session training, writes a checkpoint")
    _add_data_flags(p, need_test=False)
    _add_cal_flags(p)
    _add_base_flags(p)
    p.add_argument("--ckpt", required=True, help="checkpoint output path")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_base_train)

    p = sub.add_parser("online-run", help="online sessions from a base checkpoint")
    _add_data_flags(p)
    _add_cal_flags(p)
    _add_online_flags(p)
    p.add_argument("--ckpt", required=True, help="base checkpoint to start from")
    p.add_argument("--ckpt-out", default=None, help="write the post-session checkpoint here")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_online_run)

    p = sub.add_parser("run", help="end to end: base training then all online sessions")
    _add_data_flags(p)
    _add_cal_flags(p)
    _add_base_flags(p)
    _add_online_flags(p)
    p.add_argument("--ckpt-out", default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="rerun the pipeline over one hyperparameter axis")
    _add_data_flags(p)
    _add_cal_flags(p)
    _add_base_flags(p)
    _add_online_flags(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="end-to-end run, emitting the overhead report")
    _add_data_flags(p)
    _add_cal_flags(p)
    _add_base_flags(p)
    _add_online_flags(p)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="metrics of a checkpoint against a test FVEC")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def _configs(args) -> tuple[CalibrationConfig, BaseTrainConfig | None, OnlineConfig | None]:
    """Build config dataclasses from flags, mapping validation to usage errors."""
    try:
        cal = CalibrationConfig(lam=args.lam, var_floor=args.var_floor)
        bcfg = None
        if hasattr(args, "epochs"):
            hidden = tuple(int(h) for h in str(args.hidden).split(",") if h != "")
            bcfg = BaseTrainConfig(
                loss_kind=args.loss,
                epochs=args.epochs,
                batch_size=args.batch_size,
                lr=args.lr,
                temperature=args.temperature,
                d_hyper=args.d_hyper,
                hidden=hidden,
                seed=args.seed,
            )
        ocfg = None
        if hasattr(args, "T"):
            ocfg = OnlineConfig(
                T=args.T,
                k_per_class=args.k_per_class,
                lr_inner=args.lr_inner,
                lr_outer=args.lr_outer,
                stream_batch=args.stream_batch,
                temperature_cls=args.temperature_cls,
                k_base=args.k_base,
                k_novel=args.k_novel,
                freeze_base_prototypes=args.freeze_base_prototypes,
            )
        return cal, bcfg, ocfg
    except ValueError as e:
        raise UsageError(str(e)) from e


def _load_set(path) -> FeatureSet:
    data = read_fvec(path)
    ids = data.class_ids()
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: labels must be contiguous 0..n-1, got {ids[:8]}...")
    return data


def _plan(spec: str, n_classes: int, seed: int):
    base_pct, session_pct, n_sessions = parse_partition_spec(spec)
    return make_partition(n_classes, base_pct, session_pct, n_sessions, seed)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _check_metrics_finite(metrics: dict):
    values = [v for k, v in metrics.items() if isinstance(v, float)]
    check_finite(np.asarray(values), "metrics")


def _config_echo(args, cal, bcfg, ocfg) -> dict:
    echo = {
        "train": getattr(args, "train", None),
        "test": getattr(args, "test", None),
        "partition": getattr(args, "partition", None),
        "seed": args.seed,
        "calibration": asdict(cal),
    }
    if bcfg is not None:
        echo["base_train"] = asdict(bcfg)
        echo["base_train"]["hidden"] = list(bcfg.hidden)
    if ocfg is not None:
        echo["online"] = asdict(ocfg)
    return echo


def _session_phase(state, train, test, plan, cal, ocfg, seed) -> list[dict]:
    records = []
    master = Rng(seed)
    for i, classes in enumerate(plan.sessions):
        stream = train.restrict(classes)
        if len(stream) == 0:
            raise ValueError(f"session {i + 1} classes {classes} have no training rows")
        rec = run_online_session(state, stream.samples(), cal, ocfg, master.spawn(100 + i))
        snap = test.restrict(state.seen_order)
        preds = classify_batch(state, snap.features, cal)
        metrics = compute_metrics(preds, snap.labels, state.base_classes).to_dict()
        _check_metrics_finite(metrics)
        records.append(
            {
                "session_index": rec.session_index,
                "novel_classes": rec.novel_classes,
                "n_samples": rec.n_samples,
                "loss_trace": rec.loss_trace,
                "wall_ms": rec.wall_ms,
                "state_bytes": len(state_payload_bytes(state, cal)),
                "metrics": metrics,
            }
        )
    return records


def _final_eval(state, test, plan, cal) -> dict:
    covered = test.restrict(plan.all_classes())
    if len(covered) == 0:
        raise ValueError("test set has no rows for the partitioned classes")
    t0 = time.perf_counter()
    preds = classify_batch(state, covered.features, cal)
    metrics = compute_metrics(preds, covered.labels, state.base_classes).to_dict()
    _check_metrics_finite(metrics)
    return {"metrics": metrics, "eval_wall_ms": (time.perf_counter() - t0) * 1e3}


def _overhead(state, cal, base_wall_ms, session_records, eval_wall_ms) -> dict:
    acct = state_byte_account(state)
    assert acct["state_bytes"] == len(state_payload_bytes(state, cal))
    return {
        **acct,
        "param_count_projection": state.projection.param_count(),
        "base_wall_ms": base_wall_ms,
        "online_wall_ms": [r["wall_ms"] for r in session_records],
        "eval_wall_ms": eval_wall_ms,
    }


def run_pipeline(args, cal, bcfg, ocfg) -> tuple[dict, LearnerState]:
    """base-train -> online sessions -> final evaluation, as one report."""
    train = _load_set(args.train)
    test = _load_set(args.test)
    plan = _plan(args.partition, len(train.class_ids()), args.seed)

    base_set = train.restrict(plan.base_classes)
    result = train_base(
        base_set.features, base_set.labels, plan.base_classes, bcfg, cal, Rng(args.seed).spawn(1)
    )
    state = LearnerState.from_base(result)

    base_test = test.restrict(plan.base_classes)
    base_metrics = compute_metrics(
        classify_batch(state, base_test.features, cal), base_test.labels, plan.base_classes
    ).to_dict()
    _check_metrics_finite(base_metrics)

    sessions = _session_phase(state, train, test, plan, cal, ocfg, args.seed)
    final = _final_eval(state, test, plan, cal)

    report = {
        "tool": "proto-ocl",
        "version": __version__,
        "created_at": _now(),
        "config": _config_echo(args, cal, bcfg, ocfg),
        "partition": {
            "n_classes": plan.n_classes,
            "base_classes": plan.base_classes,
            "sessions": plan.sessions,
        },
        "base": {
            "wall_ms": result.wall_ms,
            "epoch_losses": result.epoch_losses,
            "metrics": base_metrics,
        },
        "sessions": sessions,
        "final_metrics": final["metrics"],
        "overhead": _overhead(state, cal, result.wall_ms, sessions, final["eval_wall_ms"]),
    }
    return report, state


def stable_report_view(obj):
    """Report with volatile fields (timestamps, wall-clock) removed."""
    if isinstance(obj, dict):
        return {
            k: stable_report_view(v)
            for k, v in obj.items()
            if k != "created_at" and not k.endswith("_ms")
        }
    if isinstance(obj, list):
        return [stable_report_view(v) for v in obj]
    return obj


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    if args.classes < 1 or args.dim < 1 or args.train_per_class < 1 or args.test_per_class < 1:
        raise UsageError("counts must be positive")
    if args.separation <= 0:
        raise UsageError("separation must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = gen_synthetic(
        args.classes, args.dim, args.train_per_class, args.test_per_class,
        args.separation, args.seed,
    )
    meta = {
        "source": "synthetic",
        "generator": f"proto-ocl {__version__}",
        "classes": args.classes,
        "dim": args.dim,
        "separation": args.separation,
        "seed": args.seed,
    }
    for name, data, per_class in (("train", train, args.train_per_class),
                                  ("test", test, args.test_per_class)):
        path = out / f"{name}.fvec"
        write_fvec(path, data)
        write_meta(path, {**meta, "split": name, "per_class": per_class})
    print(f"wrote {out / 'train.fvec'} ({len(train)}) and {out / 'test.fvec'} ({len(test)})")
    return 0


def cmd_base_train(args) -> int:
    cal, bcfg, _ = _configs(args)
    train = _load_set(args.train)
    plan = _plan(args.partition, len(train.class_ids()), args.seed)
    base_set = train.restrict(plan.base_classes)
    result = train_base(
        base_set.features, base_set.labels, plan.base_classes, bcfg, cal, Rng(args.seed).spawn(1)
    )
    save_checkpoint(args.ckpt, CheckpointBundle.from_base_result(result, cal))
    if args.report:
        _write_json(
            args.report,
            {
                "tool": "proto-ocl",
                "version": __version__,
                "created_at": _now(),
                "config": _config_echo(args, cal, bcfg, None),
                "partition": {
                    "n_classes": plan.n_classes,
                    "base_classes": plan.base_classes,
                    "sessions": plan.sessions,
                },
                "base": {"wall_ms": result.wall_ms, "epoch_losses": result.epoch_losses},
            },
        )
    print(f"checkpoint written to {args.ckpt}")
    return 0


def cmd_online_run(args) -> int:
    cal_flags, _, ocfg = _configs(args)
    bundle = load_checkpoint(args.ckpt)
    cal = bundle.cal  # training-time calibration travels with the checkpoint
    train = _load_set(args.train)
    test = _load_set(args.test)
    plan = _plan(args.partition, len(train.class_ids()), args.seed)
    if sorted(plan.base_classes) != sorted(bundle.base_classes):
        raise ValueError(
            "partition/seed do not reproduce the checkpoint's base classes; "
            f"plan {sorted(plan.base_classes)} vs checkpoint {sorted(bundle.base_classes)}"
        )
    state = bundle.to_state()
    sessions = _session_phase(state, train, test, plan, cal, ocfg, args.seed)
    final = _final_eval(state, test, plan, cal)
    report = {
        "tool": "proto-ocl",
        "version": __version__,
        "created_at": _now(),
        "config": {**_config_echo(args, cal, None, ocfg), "ckpt": args.ckpt},
        "partition": {
            "n_classes": plan.n_classes,
            "base_classes": plan.base_classes,
            "sessions": plan.sessions,
        },
        "sessions": sessions,
        "final_metrics": final["metrics"],
        "overhead": _overhead(state, cal, 0.0, sessions, final["eval_wall_ms"]),
    }
    _write_json(args.report, report)
    if args.ckpt_out:
        save_checkpoint(args.ckpt_out, CheckpointBundle.from_state(state, cal, bundle.heads))
    print(f"report written to {args.report}")
    return 0


def cmd_run(args) -> int:
    cal, bcfg, ocfg = _configs(args)
    report, state = run_pipeline(args, cal, bcfg, ocfg)
    _write_json(args.report, report)
    if args.ckpt_out:
        save_checkpoint(args.ckpt_out, CheckpointBundle.from_state(state, cal))
    fm = report["final_metrics"]
    print(
        f"acc_all {fm['acc_all']:.2f}  base {fm['acc_base']:.2f}  "
        f"novel {fm['acc_novel']:.2f}  hm {fm['hm']:.2f}"
    )
    return 0


def _sweep_value_type(param: str):
    return float if param == "lambda" else int


def _apply_sweep_param(cal, bcfg, ocfg, param, value):
    if param == "lambda":
        return replace(cal, lam=value), bcfg, ocfg
    if param == "dh":
        return cal, replace(bcfg, d_hyper=value), ocfg
    field = {"T": "T", "K": "k_per_class", "k_base": "k_base", "k_novel": "k_novel"}[param]
    return cal, bcfg, replace(ocfg, **{field: value})


def _sweep_point(args, value) -> dict:
    cal, bcfg, ocfg = _configs(args)
    try:
        cal, bcfg, ocfg = _apply_sweep_param(cal, bcfg, ocfg, args.param, value)
    except ValueError as e:
        raise UsageError(str(e)) from e
    t0 = time.perf_counter()
    report, _ = run_pipeline(args, cal, bcfg, ocfg)
    fm = report["final_metrics"]
    return {
        "value": value,
        "acc_all": fm["acc_all"],
        "acc_base": fm["acc_base"],
        "acc_novel": fm["acc_novel"],
        "hm": fm["hm"],
        "time_ms": (time.perf_counter() - t0) * 1e3,
        "state_bytes": report["overhead"]["state_bytes"],
    }


def cmd_sweep(args) -> int:
    cast = _sweep_value_type(args.param)
    try:
        values = [cast(v) for v in args.values.split(",") if v != ""]
    except ValueError as e:
        raise UsageError(f"bad --values list: {e}") from e
    if not values:
        raise UsageError("--values is empty")
    _configs(args)  # validate the shared flags before farming out work
    workers = max(1, args.parallel)
    cap = int(os.environ.get("PROTO_OCL_THREADS", "0") or "0")
    if cap > 0:
        workers = min(workers, cap)
    workers = min(workers, len(values))
    if workers == 1:
        rows = [_sweep_point(args, v) for v in values]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, [args] * len(values), values))
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"{len(rows)} rows written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    cal, bcfg, ocfg = _configs(args)
    report, _ = run_pipeline(args, cal, bcfg, ocfg)
    bench = {
        "version": report["version"],
        "overhead": report["overhead"],
        "final_metrics": report["final_metrics"],
    }
    if args.report:
        _write_json(args.report, {**bench, "created_at": _now(), "config": report["config"]})
    print(json.dumps(bench, indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    state = bundle.to_state()
    test = _load_set(args.test)
    covered = test.restrict(state.seen_order)
    if len(covered) == 0:
        raise ValueError("test set has no rows for the checkpoint's seen classes")
    preds = classify_batch(state, covered.features, bundle.cal)
    metrics = compute_metrics(preds, covered.labels, state.base_classes).to_dict()
    _check_metrics_finite(metrics)
    out = {"version": __version__, "ckpt": args.ckpt, "test": args.test, "metrics": metrics}
    if args.report:
        _write_json(args.report, {**out, "created_at": _now()})
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (FormatError, OSError, ValueError, KeyError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
