"""Prototype classification and the metric suite: class-wise accuracy
over all/base/novel groups, harmonic accuracy, and byte-level overhead
accounting for the non-exemplar state.

All accuracies are carried as reals in [0, 100] and rounded only at
presentation time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationConfig, power_transform
from .online_learner import LearnerState
from .projection import project_batch


def harmonic_accuracy(acc_base: float, acc_novel: float) -> float:
    """2ab/(a+b), or 0 when the sum is not positive."""
    s = acc_base + acc_novel
    if s <= 0.0:
        return 0.0
    return 2.0 * acc_base * acc_novel / s


@dataclass
class Metrics:
    acc_all: float
    acc_base: float
    acc_novel: float
    hm: float
    per_class_acc: dict[int, float]
    n_base_classes: int
    n_novel_classes: int

    def to_dict(self) -> dict:
        return {
            "acc_all": self.acc_all,
            "acc_base": self.acc_base,
            "acc_novel": self.acc_novel,
            "hm": self.hm,
            "per_class_acc": {str(c): v for c, v in sorted(self.per_class_acc.items())},
            "n_base_classes": self.n_base_classes,
            "n_novel_classes": self.n_novel_classes,
        }


def classify_batch(state: LearnerState, xs: np.ndarray, cal: CalibrationConfig) -> np.ndarray:
    """Nearest-prototype labels for raw feature rows.

    Each row is power-transformed, projected, and scored by cosine
    against every seen class's hyperdimensional prototype; ties go to
    the smallest class id (prototypes are scored in ascending id order
    and argmax keeps the first maximum).
    """
    ids, protos = state.prototypes.hyper_matrix()
    xt = power_transform(np.atleast_2d(xs), cal)
    zs = project_batch(state.projection, xt)
    norms = np.linalg.norm(zs, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("a query projected to the zero vector")
    scores = (zs / norms) @ protos.T  # prototypes are unit vectors
    return np.asarray(ids, dtype=np.int64)[scores.argmax(axis=1)]


def classify(state: LearnerState, x: np.ndarray, cal: CalibrationConfig) -> int:
    return int(classify_batch(state, np.asarray(x)[None, :], cal)[0])


def compute_metrics(preds, labels, base_set) -> Metrics:
    """Class-wise accuracy averaged within the base and novel groups,
    sample-level overall accuracy, and their harmonic combination.

    A group with no classes present scores 0, which also zeroes hm.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have equal length")
    if len(labels) == 0:
        raise ValueError("empty test set")
    base_set = set(int(c) for c in base_set)

    per_class = {}
    for c in sorted(int(c) for c in np.unique(labels)):
        mask = labels == c
        per_class[c] = 100.0 * float((preds[mask] == c).mean())
    base_accs = [a for c, a in per_class.items() if c in base_set]
    novel_accs = [a for c, a in per_class.items() if c not in base_set]
    acc_base = float(np.mean(base_accs)) if base_accs else 0.0
    acc_novel = float(np.mean(novel_accs)) if novel_accs else 0.0
    return Metrics(
        acc_all=100.0 * float((preds == labels).mean()),
        acc_base=acc_base,
        acc_novel=acc_novel,
        hm=harmonic_accuracy(acc_base, acc_novel),
        per_class_acc=per_class,
        n_base_classes=len(base_accs),
        n_novel_classes=len(novel_accs),
    )


def state_byte_account(state: LearnerState) -> dict:
    """Deterministic size accounting for the learner state.

    Per seen class the state holds a mean and a variance in feature
    space plus one hyperdimensional prototype, all float64; the only
    other trainable memory is the projection module. The total equals
    the state payload serializer's output length byte for byte.
    """
    n_classes = len(state.stats)
    dims = {s.dim for s in state.stats.values()}
    if len(dims) > 1:
        raise ValueError(f"inconsistent feature dims in stats bank: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    d_hyper = state.projection.d_hyper
    stats_bytes = n_classes * 2 * dim * 8
    proto_bytes = n_classes * d_hyper * 8
    param_bytes = state.projection.param_count() * 8
    return {
        "n_classes": n_classes,
        "dim": dim,
        "d_hyper": d_hyper,
        "stats_bytes": stats_bytes,
        "proto_bytes": proto_bytes,
        "param_bytes": param_bytes,
        "state_bytes": stats_bytes + proto_bytes + param_bytes,
        "trainable_values": state.projection.param_count() + n_classes * d_hyper,
    }
