from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from embed_export.backbone import ReducedResNet18

import exporter_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if exporter_log.VERDICTS:
        terminalreporter.write_sep("=", "exporter acceptance")
        for line in exporter_log.VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def image_tree(tmp_path_factory):
    """Small on-disk image-folder dataset: 3 classes, 6 train + 2 test
    images each, 32x32 RGB noise. Registered under the core50 name so
    the folder loader path is exercised without the real archive."""
    root = tmp_path_factory.mktemp("imgdata")
    rng = np.random.default_rng(11)
    counts = {"train": 6, "test": 2}
    for split, n in counts.items():
        for cls in ("ant", "bee", "cow"):
            d = root / "core50" / split / cls
            d.mkdir(parents=True)
            for i in range(n):
                arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
                Image.fromarray(arr).save(d / f"{i}.png")
    return root


@pytest.fixture(scope="session")
def pilot_ckpt(tmp_path_factory):
    """A saved backbone checkpoint with a declared architecture string."""
    torch.manual_seed(42)
    model = ReducedResNet18()
    path = tmp_path_factory.mktemp("ckpt") / "pilot.pt"
    torch.save({"arch": "reduced-resnet18-nf20/pilot",
                "state_dict": model.state_dict()}, path)
    return path
