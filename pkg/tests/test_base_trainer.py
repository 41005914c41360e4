"""Base-session training: objective structure, frozen outputs, determinism."""

import math

import numpy as np
import pytest

from proto_ocl.base_trainer import BaseTrainConfig, train_base
from proto_ocl.calibration import CalibrationConfig, power_transform
from proto_ocl.dataio import gen_synthetic
from proto_ocl.numerics import Rng
from proto_ocl.projection import project_batch
from proto_ocl.prototypes import unit


def _blobs(seed=3, n_classes=6, dim=12, per_class=20, separation=1.2):
    train, _ = gen_synthetic(n_classes, dim, per_class, 2, separation, seed)
    return train.features, train.labels


def _cfg(**kw):
    base = dict(
        loss_kind="ce", epochs=6, batch_size=16, lr=0.05,
        d_hyper=32, hidden=(24,), seed=0,
    )
    base.update(kw)
    return BaseTrainConfig(**base)


def test_config_validation():
    for kw in (
        {"loss_kind": "mse"},
        {"epochs": 0},
        {"batch_size": 0},
        {"loss_kind": "sc", "batch_size": 1},
        {"lr": 0.0},
        {"temperature": 0.0},
    ):
        with pytest.raises(ValueError):
            _cfg(**kw)


def test_loss_decreases_over_epochs():
    x, y = _blobs()
    res = train_base(x, y, range(6), _cfg(), CalibrationConfig(), Rng(1))
    assert res.epoch_losses[-1]["loss_total"] < res.epoch_losses[0]["loss_total"]
    assert res.epoch_losses[-1]["loss_hp"] < res.epoch_losses[0]["loss_hp"]


def test_recorded_total_is_exact_sum_of_terms():
    x, y = _blobs()
    res = train_base(x, y, range(6), _cfg(epochs=3), CalibrationConfig(), Rng(1))
    assert len(res.step_losses) > 0
    for l_vp, l_hp, total in res.step_losses:
        assert abs(total - (l_vp + l_hp)) <= 1e-12
    for row in res.epoch_losses:
        assert abs(row["loss_total"] - (row["loss_vp"] + row["loss_hp"])) <= 1e-9


def test_initial_loss_is_near_twice_log_c():
    # both untrained ce heads start close to uniform; each term is about ln C
    x, y = _blobs(n_classes=6)
    res = train_base(x, y, range(6), _cfg(epochs=1), CalibrationConfig(), Rng(2))
    first_total = res.step_losses[0][2]
    assert first_total == pytest.approx(2.0 * math.log(6), rel=0.35)


def test_frozen_stats_and_prototypes_are_consistent():
    x, y = _blobs()
    cal = CalibrationConfig()
    res = train_base(x, y, range(6), _cfg(epochs=2), cal, Rng(3))
    xt = power_transform(x, cal)
    zs = project_batch(res.module, xt)
    for c in range(6):
        rows = np.flatnonzero(y == c)
        assert res.stats[c].count == len(rows)
        np.testing.assert_allclose(res.stats[c].mean, xt[rows].mean(axis=0), atol=1e-9)
        np.testing.assert_allclose(res.prototypes.vanilla[c], res.stats[c].mean, atol=0)
        np.testing.assert_allclose(
            res.prototypes.hyper[c], unit(zs[rows].mean(axis=0)), atol=1e-9
        )
        assert np.linalg.norm(res.prototypes.hyper[c]) == pytest.approx(1.0, abs=1e-9)


def test_training_is_seed_deterministic():
    x, y = _blobs()
    cal = CalibrationConfig()
    a = train_base(x, y, range(6), _cfg(epochs=2), cal, Rng(4))
    b = train_base(x, y, range(6), _cfg(epochs=2), cal, Rng(4))
    c = train_base(x, y, range(6), _cfg(epochs=2), cal, Rng(5))
    assert a.step_losses == b.step_losses
    for la, lb in zip(a.module.layers, b.module.layers):
        np.testing.assert_array_equal(la.w, lb.w)
        np.testing.assert_array_equal(la.b, lb.b)
    assert a.step_losses != c.step_losses


def test_label_and_coverage_validation():
    x, y = _blobs(n_classes=4)
    with pytest.raises(ValueError, match="non-base"):
        train_base(x, y, [0, 1, 2], _cfg(), CalibrationConfig(), Rng(0))
    with pytest.raises(ValueError, match="without samples"):
        train_base(x, y, [0, 1, 2, 3, 4], _cfg(), CalibrationConfig(), Rng(0))
    with pytest.raises(ValueError, match="at least 2"):
        xa = np.vstack([x, np.ones((1, x.shape[1]))])
        ya = np.concatenate([y, [9]])
        train_base(xa, ya, [0, 1, 2, 3, 9], _cfg(), CalibrationConfig(), Rng(0))
    with pytest.raises(ValueError, match="align"):
        train_base(x[:5], y[:4], [0, 1, 2, 3], _cfg(), CalibrationConfig(), Rng(0))


def test_contrastive_path_trains_and_drops_singleton_batches():
    x, y = _blobs(n_classes=3, per_class=5)  # 15 samples, batch 4 -> trailing 3
    cfg = _cfg(loss_kind="sc", epochs=2, batch_size=4)
    res = train_base(x, y, range(3), cfg, CalibrationConfig(), Rng(6))
    # 15 = 4+4+4+3: all four batches have >= 2 samples, none dropped
    assert len(res.step_losses) == 8
    assert all(np.isfinite(t) for _, _, t in res.step_losses)

    x2, y2 = x[:13], y[:13]  # 13 = 4+4+4+1: the trailing singleton is skipped
    res2 = train_base(x2, y2, range(3), cfg, CalibrationConfig(), Rng(6))
    assert len(res2.step_losses) == 6


def test_contrastive_head_shapes():
    x, y = _blobs(n_classes=3, per_class=6)
    cfg = _cfg(loss_kind="sc", epochs=1, batch_size=6)
    res = train_base(x, y, range(3), cfg, CalibrationConfig(), Rng(7))
    assert res.head_vp.kind == "sc" and res.head_hp.kind == "sc"
    assert len(res.head_hp.layers) == 2
    assert res.head_hp.layers[0].d_in == cfg.d_hyper


def test_wall_time_recorded():
    x, y = _blobs(n_classes=3, per_class=4)
    res = train_base(x, y, range(3), _cfg(epochs=1), CalibrationConfig(), Rng(8))
    assert res.wall_ms > 0.0
