import numpy as np
import pytest

from proto_ocl.base_trainer import BaseTrainConfig, train_base
from proto_ocl.calibration import CalibrationConfig
from proto_ocl.dataio import gen_synthetic, make_partition
from proto_ocl.numerics import Rng
from proto_ocl.online_learner import LearnerState, OnlineConfig, run_online_session

import acceptance_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_log.LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def calib():
    return CalibrationConfig()


@pytest.fixture(scope="session")
def tiny_run(calib):
    """A small trained pipeline shared by read-only tests: 8 classes,
    5 base + one session of [5, 6] + one of [7]."""
    train, test = gen_synthetic(8, 24, 40, 20, separation=1.0, seed=301)
    bcfg = BaseTrainConfig(
        loss_kind="ce", epochs=12, batch_size=64, lr=0.05, d_hyper=96, hidden=(48,)
    )
    base_classes = [0, 1, 2, 3, 4]
    base = train.restrict(base_classes)
    result = train_base(base.features, base.labels, base_classes, bcfg, calib, Rng(5))
    state = LearnerState.from_base(result)
    ocfg = OnlineConfig(T=8, k_per_class=15, lr_inner=0.05, lr_outer=0.01)
    records = [
        run_online_session(state, train.restrict([5, 6]).samples(), calib, ocfg, Rng(91)),
        run_online_session(state, train.restrict([7]).samples(), calib, ocfg, Rng(92)),
    ]
    return {
        "train": train,
        "test": test,
        "base_classes": base_classes,
        "result": result,
        "state": state,
        "records": records,
        "ocfg": ocfg,
    }
