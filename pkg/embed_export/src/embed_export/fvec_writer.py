"""Writer for the engine's FVEC transport.

Implemented against the published byte layout rather than the engine's
own code, so this package stays decoupled from it:

    magic    4 bytes   "FVEC"
    version  u32       1
    dim      u32
    count    u64
    records  count x (label u32, features dim x f32)

Everything little-endian; features quantized to f32 on write.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FVEC"
VERSION = 1
MAX_LABEL = 2**31 - 1

_HEADER = struct.Struct("<4sIIQ")
_LABEL = struct.Struct("<I")


class FvecWriter:
    """Streaming writer; the record count is promised in the header, so
    the number of rows written must match it exactly by close time."""

    def __init__(self, path: str | Path, dim: int, count: int):
        if dim <= 0:
            raise ValueError("dim must be positive")
        if count < 0:
            raise ValueError("count must be non-negative")
        self.dim = int(dim)
        self.count = int(count)
        self.written = 0
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, VERSION, self.dim, self.count))

    def write_batch(self, labels, features) -> None:
        labels = np.asarray(labels)
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.dim:
            raise ValueError(f"features must be (n, {self.dim})")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must align with feature rows")
        if labels.size and (labels.min() < 0 or labels.max() > MAX_LABEL):
            raise ValueError("label out of range")
        if not np.isfinite(features).all():
            raise ValueError("features must be finite")
        quantized = features.astype("<f4")
        for lab, row in zip(labels, quantized):
            self._fh.write(_LABEL.pack(int(lab)))
            self._fh.write(row.tobytes())
        self.written += features.shape[0]
        if self.written > self.count:
            self._fh.close()
            raise ValueError("wrote more records than the header promises")

    def close(self) -> None:
        self._fh.close()
        if self.written != self.count:
            raise ValueError(
                f"header promises {self.count} records, wrote {self.written}")

    def __enter__(self) -> "FvecWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


def write_fvec(path: str | Path, labels, features) -> None:
    features = np.asarray(features, dtype=np.float64)
    with FvecWriter(path, features.shape[1], features.shape[0]) as w:
        w.write_batch(labels, features)


def write_meta(fvec_path: str | Path, meta: dict) -> Path:
    """Drop the provenance sidecar next to the FVEC file."""
    path = Path(fvec_path).with_suffix(".meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path
