"""End-to-end feature export: images -> backbone -> FVEC + sidecar."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from embed_export.backbone import load_backbone
from embed_export.datasets import DEFAULT_ROOT, load_split
from embed_export.fvec_writer import FvecWriter, write_meta


@dataclass
class ExportSpec:
    dataset: str
    split: str
    out_path: str
    ckpt_path: str | None = None
    batch_size: int = 256
    device: str = "cpu"
    data_root: str = field(default=DEFAULT_ROOT)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        parent = Path(self.out_path).resolve().parent
        if not parent.is_dir():
            raise ValueError(f"output directory {parent} does not exist")


@dataclass
class ExportResult:
    out_path: str
    meta_path: str
    count: int
    dim: int
    n_classes: int


def export_features(spec: ExportSpec) -> ExportResult:
    """Run one split through the backbone and write the FVEC file.

    Deterministic for a fixed checkpoint and dataset: loading order is
    the dataset's native order (no shuffle, single worker), the model
    runs in eval mode, and no augmentation is applied.
    """
    ds, class_names = load_split(spec.dataset, spec.split, spec.data_root)
    model, arch = load_backbone(spec.ckpt_path, spec.device, spec.seed)
    loader = DataLoader(ds, batch_size=spec.batch_size, shuffle=False,
                        num_workers=0)
    count = len(ds)
    with FvecWriter(spec.out_path, model.feature_dim, count) as writer:
        with torch.inference_mode():
            for images, labels in loader:
                feats = model(images.to(spec.device))
                writer.write_batch(labels.numpy(), feats.cpu().numpy())
    meta = {
        "dataset": spec.dataset,
        "split": spec.split,
        "backbone": arch,
        "checkpoint": spec.ckpt_path,
        "class_names": class_names,
        "count": count,
        "dim": model.feature_dim,
        "transform": "to_tensor",
    }
    meta_path = write_meta(spec.out_path, meta)
    return ExportResult(out_path=spec.out_path, meta_path=str(meta_path),
                        count=count, dim=model.feature_dim,
                        n_classes=len(class_names))
