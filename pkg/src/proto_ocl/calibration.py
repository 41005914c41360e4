"""Feature calibration: power transform, streaming class statistics, and
balanced pseudo-feature sampling.

Past classes are remembered only through per-class mean/diagonal-variance
statistics gathered in power-transformed feature space.  Replay batches are
drawn from those Gaussians with equal multiplicity per class, so no raw
sample ever needs to be stored and no class is over-represented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, gaussian_sample


@dataclass
class CalibrationConfig:
    lam: float = 0.5        # power-transform exponent on raw features
    var_floor: float = 1e-6  # variance used until a class has >= 2 samples

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.var_floor <= 0.0:
            raise ValueError("var_floor must be positive")


@dataclass
class ClassStats:
    """Streaming (Welford) mean and squared-deviation sums for one class.

    All accumulation is float64.  Updates are single-writer; reads may be
    shared freely.
    """

    class_id: int
    dim: int
    count: int = 0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self.m2 is None:
            self.m2 = np.zeros(self.dim)

    def variance(self, var_floor: float) -> np.ndarray:
        """Unbiased per-coordinate variance; var_floor until count >= 2."""
        if self.count < 2:
            return np.full(self.dim, var_floor)
        return self.m2 / (self.count - 1)


def power_transform(x: np.ndarray, cfg: CalibrationConfig) -> np.ndarray:
    """Coordinate-wise x**lam.

    Inputs must be non-negative (post-rectification features).  A negative
    coordinate is a hard error: it means an un-rectified embedding slipped
    into the pipeline.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        raise ValueError("power_transform requires non-negative features")
    if cfg.lam == 1.0:
        return x.copy()
    return np.power(x, cfg.lam)


def update_stats(stats: ClassStats, x_transformed: np.ndarray) -> ClassStats:
    """Welford update with one already-transformed sample (in place)."""
    x = np.asarray(x_transformed, dtype=np.float64)
    if x.shape != (stats.dim,):
        raise ValueError(f"dimension mismatch: {x.shape} vs ({stats.dim},)")
    stats.count += 1
    delta = x - stats.mean
    stats.mean = stats.mean + delta / stats.count
    stats.m2 = stats.m2 + delta * (x - stats.mean)
    return stats


def sample_pseudo_features(
    bank: list[ClassStats],
    k_per_class: int,
    cfg: CalibrationConfig,
    rng: Rng,
) -> list[tuple[int, np.ndarray]]:
    """Draw exactly k_per_class calibrated pseudo-features for every class.

    Classes are visited in ascending class_id order, so the output is
    deterministic given the rng state.  Balance across all classes (base and
    novel alike) is structural: callers cannot get an imbalanced batch from
    this entry point.
    """
    if k_per_class < 1:
        raise ValueError("k_per_class must be >= 1")
    return sample_pseudo_features_counts(
        bank, {s.class_id: k_per_class for s in bank}, cfg, rng
    )


def sample_pseudo_features_counts(
    bank: list[ClassStats],
    counts: dict[int, int],
    cfg: CalibrationConfig,
    rng: Rng,
) -> list[tuple[int, np.ndarray]]:
    """Per-class-count variant backing ablation sweeps of the sampling budget."""
    if not bank:
        raise ValueError("empty statistics bank")
    by_id = {s.class_id: s for s in bank}
    out = []
    for class_id in sorted(by_id):
        stats = by_id[class_id]
        if stats.count < 1:
            raise ValueError(f"class {class_id} has no observations")
        k = counts.get(class_id, 0)
        var = stats.variance(cfg.var_floor)
        for _ in range(k):
            out.append((class_id, gaussian_sample(stats.mean, var, rng)))
    return out
