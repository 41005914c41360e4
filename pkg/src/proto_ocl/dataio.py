"""Feature transport and experiment data: the FVEC binary format, synthetic
Gaussian-mixture generation, and base/session partition planning.

FVEC layout (all little-endian):

    magic   4 bytes  b"FVEC"
    version u32      1
    dim     u32
    count   u64
    count records of (label u32, features dim x f32)

Features are stored f32 on disk and promoted to f64 in memory; a read
followed by a write reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Rng

FVEC_MAGIC = b"FVEC"
FVEC_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count
MAX_LABEL = 2**31 - 1


class FormatError(Exception):
    """Base for binary-format violations."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class DimMismatchError(FormatError):
    pass


@dataclass
class LabeledFeature:
    x: np.ndarray
    y: int


@dataclass
class FeatureSet:
    """Column-oriented labeled features: labels (n,), features (n, dim)."""

    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or len(self.labels) != len(self.features):
            raise ValueError("labels and features must align")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_ids(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def restrict(self, class_ids) -> "FeatureSet":
        """Rows whose label is in class_ids, original order preserved."""
        mask = np.isin(self.labels, np.asarray(sorted(class_ids)))
        return FeatureSet(self.labels[mask], self.features[mask])

    def samples(self):
        for y, x in zip(self.labels, self.features):
            yield LabeledFeature(x=x, y=int(y))


def write_fvec(path, data: FeatureSet) -> None:
    path = Path(path)
    n, dim = data.features.shape
    if dim < 1:
        raise DimMismatchError("dim must be >= 1")
    if np.any(data.labels < 0) or np.any(data.labels > MAX_LABEL):
        raise ValueError("labels must fit in a signed 32-bit range")
    feats = data.features.astype("<f4")
    labels = data.labels.astype("<u4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FVEC_MAGIC, FVEC_VERSION, dim, n))
        # one interleaved buffer: label word followed by the f32 payload
        rec = np.empty((n, 1 + dim), dtype="<u4")
        rec[:, 0] = labels
        rec[:, 1:] = feats.view("<u4")
        fh.write(rec.tobytes())


def read_fvec(path) -> FeatureSet:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedError(f"{path}: shorter than the fixed header")
    magic, version, dim, count = _HEADER.unpack_from(blob)
    if magic != FVEC_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FVEC_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    if dim < 1:
        raise DimMismatchError(f"{path}: dim {dim} invalid")
    expect = _HEADER.size + count * (4 + 4 * dim)
    if len(blob) != expect:
        raise TruncatedError(f"{path}: {len(blob)} bytes, expected {expect}")
    rec = np.frombuffer(blob, dtype="<u4", offset=_HEADER.size).reshape(
        count, 1 + dim
    )
    labels = rec[:, 0].astype(np.int64)
    feats = rec[:, 1:].view("<f4").astype(np.float64)
    return FeatureSet(labels, feats)


def write_meta(fvec_path, meta: dict) -> None:
    """Provenance sidecar next to an FVEC file (same basename, .meta.json)."""
    p = Path(fvec_path)
    p.with_suffix(p.suffix + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n"
    )


def read_meta(fvec_path) -> dict | None:
    p = Path(fvec_path)
    sidecar = p.with_suffix(p.suffix + ".meta.json")
    if not sidecar.exists():
        return None
    return json.loads(sidecar.read_text())


def gen_synthetic(
    n_classes: int,
    dim: int,
    train_per_class: int,
    test_per_class: int,
    separation: float,
    seed: int,
) -> tuple[FeatureSet, FeatureSet]:
    """Rectified Gaussian mixture standing in for backbone features.

    Class centers are separation * |N(0, I)| (non-negative, spacing grows
    with separation); samples are the center plus unit Gaussian noise,
    clipped at zero so downstream power transforms are always valid.
    """
    if n_classes < 1 or train_per_class < 1 or test_per_class < 1 or dim < 1:
        raise ValueError("counts must be positive")
    if separation <= 0.0:
        raise ValueError("separation must be positive")
    rng = Rng(seed)
    centers = separation * np.abs(
        rng.normal(n_classes * dim).reshape(n_classes, dim)
    )

    def draw(per_class):
        feats = np.empty((n_classes * per_class, dim))
        labels = np.repeat(np.arange(n_classes), per_class)
        for c in range(n_classes):
            noise = rng.normal(per_class * dim).reshape(per_class, dim)
            feats[c * per_class : (c + 1) * per_class] = np.maximum(
                centers[c] + noise, 0.0
            )
        return FeatureSet(labels, feats)

    return draw(train_per_class), draw(test_per_class)


@dataclass
class PartitionPlan:
    n_classes: int
    base_classes: list[int]
    sessions: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        groups = [self.base_classes, *self.sessions]
        flat = [c for g in groups for c in g]
        if any(len(g) == 0 for g in groups):
            raise ValueError("base set and every session must be non-empty")
        if len(set(flat)) != len(flat):
            raise ValueError("partition groups must be disjoint")
        if any(not 0 <= c < self.n_classes for c in flat):
            raise ValueError("class id outside the dataset range")

    def all_classes(self) -> list[int]:
        return [c for g in [self.base_classes, *self.sessions] for c in g]


def parse_partition_spec(spec: str) -> tuple[int, int, int]:
    """\"B+SxN\" with integer percents, e.g. \"60+2x20\"."""
    m = re.fullmatch(r"(\d+)\+(\d+)x(\d+)", spec.strip())
    if not m:
        raise ValueError(f"partition spec {spec!r} does not match B+SxN")
    return int(m.group(1)), int(m.group(2)), int(m.group(3))


def make_partition(
    n_classes: int,
    base_pct: int,
    session_pct: int,
    n_sessions: int,
    seed: int,
) -> PartitionPlan:
    """Shuffle classes by seed, then split by the percentage arithmetic."""
    if base_pct + session_pct * n_sessions > 100:
        raise ValueError(
            f"over-allocated partition: {base_pct} + {session_pct} x {n_sessions} > 100"
        )
    n_base = n_classes * base_pct
    n_per_session = n_classes * session_pct
    if n_base % 100 or n_per_session % 100:
        raise ValueError("percentages must give whole class counts")
    n_base //= 100
    n_per_session //= 100
    if n_base < 1 or (n_sessions > 0 and n_per_session < 1):
        raise ValueError("partition groups must be non-empty")
    order = [int(i) for i in Rng(seed).permutation(n_classes)]
    base = order[:n_base]
    sessions = [
        order[n_base + i * n_per_session : n_base + (i + 1) * n_per_session]
        for i in range(n_sessions)
    ]
    return PartitionPlan(n_classes, base, sessions)
