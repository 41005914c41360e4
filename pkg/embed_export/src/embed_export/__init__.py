"""Feature exporter: reduced ResNet-18 activations to FVEC files."""

from embed_export.backbone import ReducedResNet18, CheckpointMismatchError, load_backbone
from embed_export.datasets import MissingDatasetError, DATASET_NAMES, dataset_available
from embed_export.export import ExportSpec, ExportResult, export_features
from embed_export.fvec_writer import FvecWriter, write_fvec, write_meta

__all__ = [
    "ReducedResNet18",
    "CheckpointMismatchError",
    "load_backbone",
    "MissingDatasetError",
    "DATASET_NAMES",
    "dataset_available",
    "ExportSpec",
    "ExportResult",
    "export_features",
    "FvecWriter",
    "write_fvec",
    "write_meta",
]
