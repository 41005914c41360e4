"""Single-pass online sessions over novel classes.

A session absorbs its stream once, in arrival order, folding every sample
into per-class statistics and seeding each novel class's hyperdimensional
prototype from the session's own projected mean. Raw samples are then
gone: the alternating bi-level loop that follows trains on calibrated
Gaussian pseudo-features only. The inner step refines prototypes, the
outer step realigns the projection module, both against the same
cosine-softmax objective used at inference.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .base_trainer import BaseTrainResult
from .calibration import (
    CalibrationConfig,
    ClassStats,
    power_transform,
    sample_pseudo_features_counts,
    update_stats,
)
from .losses import cosine_softmax_loss
from .numerics import NumericFailure, Rng, check_finite
from .projection import (
    ProjectionModule,
    backward_embedding,
    project_batch,
    sgd_step,
)
from .prototypes import PrototypeBank, unit


@dataclass
class OnlineConfig:
    T: int = 20
    k_per_class: int = 20
    lr_inner: float = 0.05
    lr_outer: float = 0.01
    stream_batch: int = 10
    temperature_cls: float = 0.1
    # per-group sampling overrides for ablation sweeps; None means balanced
    k_base: int | None = None
    k_novel: int | None = None
    freeze_base_prototypes: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.k_per_class < 1:
            raise ValueError("k_per_class must be >= 1")
        if self.stream_batch < 1:
            raise ValueError("stream_batch must be >= 1")
        if self.lr_inner < 0.0 or self.lr_outer < 0.0:
            raise ValueError("learning rates must be non-negative")
        if self.temperature_cls <= 0.0:
            raise ValueError("temperature_cls must be positive")
        for name in ("k_base", "k_novel"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1 when set")


@dataclass
class LearnerState:
    """Everything the learner carries between sessions.

    Statistics and prototypes only: no raw feature from any completed
    session survives here, so the state size is O(#classes * dim)
    regardless of how many samples the streams contained.
    """

    projection: ProjectionModule
    stats: dict[int, ClassStats]
    prototypes: PrototypeBank
    base_classes: tuple[int, ...]
    seen_order: list[int]
    session_index: int = 0

    @classmethod
    def from_base(cls, result: BaseTrainResult) -> "LearnerState":
        return cls(
            projection=result.module,
            stats=result.stats,
            prototypes=result.prototypes,
            base_classes=tuple(result.base_classes),
            seen_order=list(result.base_classes),
            session_index=0,
        )

    def seen_classes(self) -> list[int]:
        return list(self.seen_order)

    def novel_classes(self) -> list[int]:
        base = set(self.base_classes)
        return [c for c in self.seen_order if c not in base]


@dataclass
class SessionRecord:
    session_index: int
    novel_classes: list[int]
    n_samples: int
    loss_trace: list[float]
    wall_ms: float = 0.0


def absorb_stream(state: LearnerState, stream, cal: CalibrationConfig, cfg: OnlineConfig) -> list[int]:
    """One pass over a novel-class sample stream, in arrival order.

    Updates per-class statistics sample by sample and initializes each
    novel class's prototype from the unit-normalized mean of the
    session's projected samples. Returns the novel class ids in order
    of first appearance. The samples themselves are not retained.
    """
    already_seen = set(state.stats)
    new_order: list[int] = []
    proto_sum: dict[int, np.ndarray] = {}
    proto_n: dict[int, int] = {}
    batch: list = []
    n_total = 0

    def flush(batch):
        nonlocal n_total
        if not batch:
            return
        xs = np.stack([s.x for s in batch])
        xt = power_transform(xs, cal)
        zs = project_batch(state.projection, xt)
        for i, s in enumerate(batch):
            c = int(s.y)
            if c in already_seen:
                raise ValueError(f"class {c} was already seen in a previous session")
            if c not in state.stats:
                state.stats[c] = ClassStats(class_id=c, dim=len(s.x))
                new_order.append(c)
                proto_sum[c] = np.zeros(zs.shape[1])
                proto_n[c] = 0
            update_stats(state.stats[c], xt[i])
            proto_sum[c] += zs[i]
            proto_n[c] += 1
        n_total += len(batch)
        batch.clear()

    for sample in stream:
        batch.append(sample)
        if len(batch) == cfg.stream_batch:
            flush(batch)
    flush(batch)
    if n_total == 0:
        raise ValueError("empty session stream")

    for c in new_order:
        state.prototypes.vanilla[c] = state.stats[c].mean.copy()
        state.prototypes.set_hyper(c, unit(proto_sum[c] / proto_n[c]))
        state.seen_order.append(c)
    state.session_index += 1
    return new_order


def _batch_forward(state: LearnerState, pseudo_batch, temperature: float):
    if not pseudo_batch:
        raise ValueError("empty pseudo batch")
    xs = np.stack([x for _, x in pseudo_batch])
    ids, protos = state.prototypes.hyper_matrix()
    idx_of = {c: i for i, c in enumerate(ids)}
    missing = sorted({c for c, _ in pseudo_batch} - set(ids))
    if missing:
        raise ValueError(f"classes missing a prototype: {missing}")
    label_idx = np.array([idx_of[c] for c, _ in pseudo_batch], dtype=np.int64)
    zs = project_batch(state.projection, xs)
    loss, d_emb, d_protos = cosine_softmax_loss(zs, protos, label_idx, temperature)
    if not np.isfinite(loss):
        raise NumericFailure("non-finite bi-level objective")
    return xs, ids, protos, loss, d_emb, d_protos


def refine_prototypes(
    state: LearnerState,
    pseudo_batch,
    lr_inner: float,
    temperature: float = 0.1,
    freeze_base: bool = False,
) -> float:
    """Inner step: one gradient update of the prototypes, projection frozen.

    Updated prototypes are re-unit-normalized. Returns the batch loss at
    the pre-step parameters; lr_inner=0 leaves the bank untouched.
    """
    _, ids, protos, loss, _, d_protos = _batch_forward(state, pseudo_batch, temperature)
    if lr_inner != 0.0:
        frozen = set(state.base_classes) if freeze_base else set()
        stepped = protos - lr_inner * d_protos
        for i, c in enumerate(ids):
            if c in frozen or not d_protos[i].any():
                continue
            state.prototypes.set_hyper(c, stepped[i])
    return loss


def align_projection(
    state: LearnerState,
    pseudo_batch,
    lr_outer: float,
    temperature: float = 0.1,
) -> float:
    """Outer step: one gradient update of the projection, prototypes frozen.

    Touches exactly the projection module's parameters and nothing else.
    Returns the batch loss at the pre-step parameters; lr_outer=0 is a
    null step.
    """
    xs, _, _, loss, d_emb, _ = _batch_forward(state, pseudo_batch, temperature)
    if lr_outer != 0.0:
        grads = backward_embedding(state.projection, xs, d_emb)
        sgd_step(state.projection.layers, grads, lr_outer)
    return loss


def bilevel_optimize(
    state: LearnerState,
    cal: CalibrationConfig,
    cfg: OnlineConfig,
    rng: Rng,
) -> list[float]:
    """T alternating iterations on fresh balanced pseudo-batches.

    Each iteration draws k_per_class calibrated pseudo-features for every
    seen class (base and novel alike, unless the per-group overrides say
    otherwise), refines prototypes, then realigns the projection. The
    recorded trace value is the objective seen by the align step, i.e.
    after that iteration's prototype refinement and before the
    projection update.
    """
    seen = sorted(state.stats)
    if len(seen) < 2:
        raise ValueError("bi-level optimization needs at least 2 seen classes")
    base = set(state.base_classes)
    counts = {}
    for c in seen:
        if c in base and cfg.k_base is not None:
            counts[c] = cfg.k_base
        elif c not in base and cfg.k_novel is not None:
            counts[c] = cfg.k_novel
        else:
            counts[c] = cfg.k_per_class
    bank = [state.stats[c] for c in seen]
    trace = []
    for _ in range(cfg.T):
        pseudo = sample_pseudo_features_counts(bank, counts, cal, rng)
        refine_prototypes(
            state,
            pseudo,
            cfg.lr_inner,
            temperature=cfg.temperature_cls,
            freeze_base=cfg.freeze_base_prototypes,
        )
        trace.append(
            align_projection(state, pseudo, cfg.lr_outer, temperature=cfg.temperature_cls)
        )
    check_finite(np.asarray(trace), "bi-level loss trace")
    return trace


def run_online_session(
    state: LearnerState,
    stream,
    cal: CalibrationConfig,
    cfg: OnlineConfig,
    rng: Rng,
) -> SessionRecord:
    """Absorb one novel-class stream, then bi-level optimize. Mutates state."""
    t0 = time.perf_counter()
    n_before = sum(s.count for s in state.stats.values())
    novel = absorb_stream(state, stream, cal, cfg)
    n_samples = sum(s.count for s in state.stats.values()) - n_before
    trace = bilevel_optimize(state, cal, cfg, rng)
    return SessionRecord(
        session_index=state.session_index,
        novel_classes=novel,
        n_samples=int(n_samples),
        loss_trace=[float(v) for v in trace],
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
