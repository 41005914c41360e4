"""Command line entry point.

Exit codes mirror the engine's convention: 0 success, 1 usage error,
2 data error (missing dataset, unloadable or mismatched checkpoint).
"""

from __future__ import annotations

import argparse
import sys

from embed_export.backbone import CheckpointMismatchError
from embed_export.datasets import DATASET_NAMES, DEFAULT_ROOT, MissingDatasetError
from embed_export.export import ExportSpec, export_features


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-export")
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="dump one dataset split to FVEC")
    exp.add_argument("--dataset", required=True, choices=DATASET_NAMES)
    exp.add_argument("--split", required=True, choices=("train", "test"))
    exp.add_argument("--out", required=True, help="output .fvec path")
    exp.add_argument("--ckpt", default=None,
                     help="backbone checkpoint; random init when omitted")
    exp.add_argument("--batch-size", type=int, default=256)
    exp.add_argument("--device", default="cpu")
    exp.add_argument("--data-root", default=DEFAULT_ROOT)
    exp.add_argument("--seed", type=int, default=0,
                     help="init seed when no checkpoint is given")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        spec = ExportSpec(dataset=args.dataset, split=args.split,
                          out_path=args.out, ckpt_path=args.ckpt,
                          batch_size=args.batch_size, device=args.device,
                          data_root=args.data_root, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        result = export_features(spec)
    except (MissingDatasetError, CheckpointMismatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.count} x {result.dim} features "
          f"({result.n_classes} classes) to {result.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
