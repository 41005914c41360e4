"""Per-class prototype storage: vanilla (feature-space means) and
hyperdimensional (unit vectors in projected space, refined online)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass
class PrototypeBank:
    vanilla: dict[int, np.ndarray] = field(default_factory=dict)  # class means
    hyper: dict[int, np.ndarray] = field(default_factory=dict)    # unit vectors

    def class_ids(self) -> list[int]:
        return sorted(self.hyper)

    def hyper_matrix(self) -> tuple[list[int], np.ndarray]:
        """(ordered class ids, stacked hyper prototypes) for batched scoring."""
        ids = self.class_ids()
        if not ids:
            raise ValueError("empty prototype bank")
        return ids, np.stack([self.hyper[c] for c in ids])

    def set_hyper(self, class_id: int, v: np.ndarray) -> None:
        self.hyper[class_id] = unit(np.asarray(v, dtype=np.float64))
