"""Base-session training: fit the projection module and its loss heads on
the base classes, then freeze per-class statistics and prototypes.

The joint objective is the sum of two terms computed on the same batch:
a head applied directly to the power-transformed features (the vanilla
path) and the same kind of head applied to the projection outputs (the
hyperdimensional path). Both heads, and the projection, take plain SGD
steps; the recorded total loss is exactly the sum of the two terms.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .calibration import (
    CalibrationConfig,
    ClassStats,
    power_transform,
    update_stats,
)
from .numerics import NumericFailure, Rng, check_finite
from .projection import (
    DEFAULT_D_HYPER,
    DEFAULT_HIDDEN,
    LossHead,
    ProjectionModule,
    backward,
    backward_head_only,
    init_head,
    init_projection,
    project_batch,
    sgd_step,
)
from .prototypes import PrototypeBank, unit


@dataclass
class BaseTrainConfig:
    loss_kind: str = "ce"  # "ce" or "sc"
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.01
    temperature: float = 0.1
    d_hyper: int = DEFAULT_D_HYPER
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in ("ce", "sc"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss_kind == "sc" and self.batch_size < 2:
            raise ValueError("contrastive batches need at least 2 samples")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class BaseTrainResult:
    module: ProjectionModule
    head_vp: LossHead
    head_hp: LossHead
    stats: dict[int, ClassStats]
    prototypes: PrototypeBank
    base_classes: list[int]
    epoch_losses: list[dict] = field(default_factory=list)
    step_losses: list[tuple[float, float, float]] = field(default_factory=list)
    wall_ms: float = 0.0


def train_base(
    features: np.ndarray,
    labels: np.ndarray,
    base_classes,
    cfg: BaseTrainConfig,
    cal: CalibrationConfig,
    rng: Rng,
) -> BaseTrainResult:
    """One offline pass over the base classes.

    features: (n, d) raw non-negative backbone features; labels: (n,) ints.
    Every label must belong to base_classes and every base class must
    appear at least twice. Returns the trained projection, both heads,
    the per-class statistics bank, and the prototype bank; the loss log
    keeps vanilla, hyper, and total terms per step and per epoch.
    """
    t0 = time.perf_counter()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    base_classes = sorted(int(c) for c in base_classes)
    if features.ndim != 2 or len(features) != len(labels):
        raise ValueError("features and labels must align")
    base_set = set(base_classes)
    present = set(int(c) for c in np.unique(labels))
    if not present <= base_set:
        raise ValueError(f"non-base labels in training set: {sorted(present - base_set)}")
    if not base_set <= present:
        raise ValueError(f"base classes without samples: {sorted(base_set - present)}")
    counts = {c: int((labels == c).sum()) for c in base_classes}
    few = [c for c, n in counts.items() if n < 2]
    if few:
        raise ValueError(f"need at least 2 samples per base class, got fewer for {few}")

    n, d_in = features.shape
    xt = power_transform(features, cal)
    class_to_idx = {c: i for i, c in enumerate(base_classes)}
    y_idx = np.array([class_to_idx[int(c)] for c in labels], dtype=np.int64)

    module = init_projection(d_in, cfg.d_hyper, rng, hidden=cfg.hidden)
    n_cls = len(base_classes)
    head_vp = init_head(cfg.loss_kind, d_in, n_cls, rng, temperature=cfg.temperature)
    head_hp = init_head(cfg.loss_kind, cfg.d_hyper, n_cls, rng, temperature=cfg.temperature)

    result = BaseTrainResult(
        module=module,
        head_vp=head_vp,
        head_hp=head_hp,
        stats={},
        prototypes=PrototypeBank(),
        base_classes=base_classes,
    )

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        ep_vp, ep_hp, ep_n = 0.0, 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cfg.loss_kind == "sc" and len(idx) < 2:
                continue  # a singleton has no contrastive pairs
            xb, yb = xt[idx], y_idx[idx]
            l_vp, tape_vp = backward_head_only(head_vp, xb, yb)
            l_hp, tape_hp = backward(module, head_hp, xb, yb)
            total = l_vp + l_hp
            if not np.isfinite(total):
                raise NumericFailure(f"non-finite loss at epoch {epoch}")
            result.step_losses.append((l_vp, l_hp, total))
            sgd_step(head_vp.layers, tape_vp.head, cfg.lr)
            sgd_step(module.layers, tape_hp.module, cfg.lr)
            sgd_step(head_hp.layers, tape_hp.head, cfg.lr)
            ep_vp += l_vp * len(idx)
            ep_hp += l_hp * len(idx)
            ep_n += len(idx)
        result.epoch_losses.append(
            {
                "epoch": epoch,
                "loss_vp": ep_vp / max(ep_n, 1),
                "loss_hp": ep_hp / max(ep_n, 1),
                "loss_total": (ep_vp + ep_hp) / max(ep_n, 1),
            }
        )

    for layer in module.layers:
        check_finite(layer.w, "projection weights after base training")

    # freeze per-class statistics and prototypes from the trained module
    zs = project_batch(module, xt)
    for c in base_classes:
        stats = ClassStats(class_id=c, dim=d_in)
        rows = np.flatnonzero(labels == c)
        for i in rows:
            update_stats(stats, xt[i])
        result.stats[c] = stats
        result.prototypes.vanilla[c] = stats.mean.copy()
        result.prototypes.set_hyper(c, unit(zs[rows].mean(axis=0)))

    result.wall_ms = (time.perf_counter() - t0) * 1e3
    return result
