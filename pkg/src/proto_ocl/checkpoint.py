"""Versioned binary checkpoints and the canonical state payload.

Checkpoint container (magic b"POCL", version 1, little-endian): the
calibration constants, partition bookkeeping, the projection module and
any loss heads (parameters as 32-bit reals), the per-class statistics
(float64 count/mean/m2 so a resumed run continues the exact Welford
accumulation), and the hyperdimensional prototypes (float64). Re-saving
a loaded checkpoint reproduces the file byte for byte.

The state payload is a separate, headerless serialization used for size
audits and overhead reporting: per seen class (ascending id) the float64
mean, variance, and hyperdimensional prototype, then the projection
parameters as float64. Its length is exactly

    n_classes * (2*dim + d_hyper) * 8  +  param_count * 8

which is the documented byte accounting for the learner state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationConfig, ClassStats
from .dataio import BadMagicError, TruncatedError, VersionError
from .online_learner import LearnerState
from .projection import AffineLayer, LossHead, ProjectionModule
from .prototypes import PrototypeBank

CKPT_MAGIC = b"POCL"
CKPT_VERSION = 1
_HEAD_KINDS = {"ce": 0, "sc": 1}
_HEAD_KIND_NAMES = {v: k for k, v in _HEAD_KINDS.items()}


@dataclass
class CheckpointBundle:
    cal: CalibrationConfig
    module: ProjectionModule
    heads: dict[str, LossHead]
    stats: dict[int, ClassStats]
    prototypes: PrototypeBank
    base_classes: tuple[int, ...]
    seen_order: list[int]
    session_index: int = 0

    @classmethod
    def from_base_result(cls, result, cal: CalibrationConfig) -> "CheckpointBundle":
        return cls(
            cal=cal,
            module=result.module,
            heads={"vp": result.head_vp, "hp": result.head_hp},
            stats=result.stats,
            prototypes=result.prototypes,
            base_classes=tuple(result.base_classes),
            seen_order=list(result.base_classes),
            session_index=0,
        )

    @classmethod
    def from_state(
        cls, state: LearnerState, cal: CalibrationConfig, heads: dict | None = None
    ) -> "CheckpointBundle":
        return cls(
            cal=cal,
            module=state.projection,
            heads=dict(heads or {}),
            stats=state.stats,
            prototypes=state.prototypes,
            base_classes=tuple(state.base_classes),
            seen_order=list(state.seen_order),
            session_index=state.session_index,
        )

    def to_state(self) -> LearnerState:
        return LearnerState(
            projection=self.module,
            stats=self.stats,
            prototypes=self.prototypes,
            base_classes=tuple(self.base_classes),
            seen_order=list(self.seen_order),
            session_index=self.session_index,
        )


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def raw(self, b: bytes):
        self.chunks.append(b)

    def u8(self, v):
        self.raw(struct.pack("<B", v))

    def u32(self, v):
        self.raw(struct.pack("<I", v))

    def u64(self, v):
        self.raw(struct.pack("<Q", v))

    def f64(self, v):
        self.raw(struct.pack("<d", v))

    def f32_array(self, a: np.ndarray):
        self.raw(np.ascontiguousarray(a, dtype="<f4").tobytes())

    def f64_array(self, a: np.ndarray):
        self.raw(np.ascontiguousarray(a, dtype="<f8").tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise TruncatedError(
                f"checkpoint truncated: need {n} bytes at offset {self.off}, "
                f"have {len(self.blob) - self.off}"
            )
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out

    def u8(self):
        return struct.unpack("<B", self.take(1))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def f32_array(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float64)

    def f64_array(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)

    def done(self):
        if self.off != len(self.blob):
            raise TruncatedError(
                f"checkpoint has {len(self.blob) - self.off} trailing bytes"
            )


def _write_layers(w: _Writer, layers: list[AffineLayer]):
    w.u32(len(layers))
    for lay in layers:
        w.u32(lay.d_in)
        w.u32(lay.d_out)
    for lay in layers:
        w.f32_array(lay.w)
        w.f32_array(lay.b)


def _read_layers(r: _Reader) -> list[AffineLayer]:
    n = r.u32()
    dims = [(r.u32(), r.u32()) for _ in range(n)]
    layers = []
    for d_in, d_out in dims:
        w = r.f32_array(d_out * d_in).reshape(d_out, d_in)
        b = r.f32_array(d_out)
        layers.append(AffineLayer(w=w, b=b))
    return layers


def pack_checkpoint(bundle: CheckpointBundle) -> bytes:
    w = _Writer()
    w.raw(CKPT_MAGIC)
    w.u32(CKPT_VERSION)
    w.f64(bundle.cal.lam)
    w.f64(bundle.cal.var_floor)
    w.u32(bundle.session_index)
    w.u32(len(bundle.base_classes))
    for c in bundle.base_classes:
        w.u32(c)
    w.u32(len(bundle.seen_order))
    for c in bundle.seen_order:
        w.u32(c)

    _write_layers(w, bundle.module.layers)

    w.u32(len(bundle.heads))
    for name in sorted(bundle.heads):
        head = bundle.heads[name]
        enc = name.encode("ascii")
        w.u8(len(enc))
        w.raw(enc)
        w.u8(_HEAD_KINDS[head.kind])
        w.f64(head.temperature)
        _write_layers(w, head.layers)

    ids = sorted(bundle.stats)
    dim = bundle.stats[ids[0]].dim if ids else 0
    w.u32(len(ids))
    w.u32(dim)
    for c in ids:
        s = bundle.stats[c]
        w.u32(c)
        w.u64(s.count)
        w.f64_array(s.mean)
        w.f64_array(s.m2)

    pids = bundle.prototypes.class_ids() if bundle.prototypes.hyper else []
    d_hyper = len(bundle.prototypes.hyper[pids[0]]) if pids else 0
    w.u32(len(pids))
    w.u32(d_hyper)
    for c in pids:
        w.u32(c)
        w.f64_array(bundle.prototypes.hyper[c])
    return w.getvalue()


def unpack_checkpoint(blob: bytes) -> CheckpointBundle:
    r = _Reader(blob)
    if r.take(4) != CKPT_MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != CKPT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    cal = CalibrationConfig(lam=r.f64(), var_floor=r.f64())
    session_index = r.u32()
    base_classes = tuple(r.u32() for _ in range(r.u32()))
    seen_order = [r.u32() for _ in range(r.u32())]

    module = ProjectionModule(layers=_read_layers(r))

    heads = {}
    for _ in range(r.u32()):
        name = r.take(r.u8()).decode("ascii")
        kind = _HEAD_KIND_NAMES[r.u8()]
        temperature = r.f64()
        heads[name] = LossHead(kind=kind, layers=_read_layers(r), temperature=temperature)

    stats = {}
    n_stats = r.u32()
    dim = r.u32()
    for _ in range(n_stats):
        c = r.u32()
        count = r.u64()
        mean = r.f64_array(dim)
        m2 = r.f64_array(dim)
        stats[c] = ClassStats(class_id=c, dim=dim, count=count, mean=mean, m2=m2)

    prototypes = PrototypeBank()
    n_protos = r.u32()
    d_hyper = r.u32()
    for _ in range(n_protos):
        c = r.u32()
        prototypes.hyper[c] = r.f64_array(d_hyper)
    for c, s in stats.items():
        prototypes.vanilla[c] = s.mean.copy()
    r.done()
    return CheckpointBundle(
        cal=cal,
        module=module,
        heads=heads,
        stats=stats,
        prototypes=prototypes,
        base_classes=base_classes,
        seen_order=seen_order,
        session_index=session_index,
    )


def save_checkpoint(path, bundle: CheckpointBundle) -> None:
    Path(path).write_bytes(pack_checkpoint(bundle))


def load_checkpoint(path) -> CheckpointBundle:
    return unpack_checkpoint(Path(path).read_bytes())


def state_payload_bytes(state: LearnerState, cal: CalibrationConfig) -> bytes:
    """Headerless float64 image of the learner's knowledge.

    Ascending class id: mean, variance, hyperdimensional prototype; then
    the projection parameters layer by layer (weights then bias). The
    length is the documented state-byte accounting, independent of how
    many samples produced the statistics.
    """
    w = _Writer()
    for c in sorted(state.stats):
        s = state.stats[c]
        w.f64_array(s.mean)
        w.f64_array(s.variance(cal.var_floor))
        w.f64_array(state.prototypes.hyper[c])
    for lay in state.projection.layers:
        w.f64_array(lay.w)
        w.f64_array(lay.b)
    return w.getvalue()
