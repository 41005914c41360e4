"""Dataset loading for export runs.

CIFAR-100 comes from torchvision's binary archive. Mini-ImageNet and
CORE-50 have no canonical torchvision loader, so they are read from an
image-folder tree at <root>/<dataset>/<split>/<class>/*. Downloads are
never attempted; a dataset that is not already on disk is a hard error
so that export runs stay deterministic.
"""

from __future__ import annotations

import os
from pathlib import Path

from torchvision import datasets as tvd
from torchvision import transforms

DATASET_NAMES = ("cifar100", "mini-imagenet", "core50")

DEFAULT_ROOT = os.environ.get("EMBED_EXPORT_DATA",
                              str(Path.home() / ".cache" / "embed-export"))

# export-time pipeline is augmentation free by design
_TO_TENSOR = transforms.ToTensor()


class MissingDatasetError(RuntimeError):
    """The requested dataset is not present under the data root."""


def _check_name_split(name: str, split: str) -> None:
    if name not in DATASET_NAMES:
        raise ValueError(f"unknown dataset {name!r}, expected one of "
                         f"{', '.join(DATASET_NAMES)}")
    if split not in ("train", "test"):
        raise ValueError("split must be 'train' or 'test'")


def load_split(name: str, split: str, root: str | Path = DEFAULT_ROOT):
    """Return (dataset, class_names) for one split, tensors in [0, 1]."""
    _check_name_split(name, split)
    root = Path(root)
    if name == "cifar100":
        try:
            ds = tvd.CIFAR100(root=str(root), train=split == "train",
                              download=False, transform=_TO_TENSOR)
        except RuntimeError as exc:
            raise MissingDatasetError(
                f"cifar100 not found under {root}") from exc
        return ds, list(ds.classes)
    folder = root / name / split
    if not folder.is_dir():
        raise MissingDatasetError(f"no image tree at {folder}")
    ds = tvd.ImageFolder(str(folder), transform=_TO_TENSOR)
    return ds, list(ds.classes)


def dataset_available(name: str, split: str = "train",
                      root: str | Path = DEFAULT_ROOT) -> bool:
    """Probe used by callers (and test skips) before committing to a run."""
    try:
        load_split(name, split, root)
    except (MissingDatasetError, ValueError):
        return False
    return True
