"""Deterministic dense-vector primitives and seeded random sampling.

Every stochastic step in the engine draws from :class:`Rng`, a counter-based
splitmix64 stream.  Its entire state is two 64-bit integers (seed, counter),
so any run replays bit-for-bit from its seed and a stream can be serialized
mid-flight and resumed.  Library default generators are deliberately not used
anywhere results depend on randomness.
"""

from __future__ import annotations

import math

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


class NumericFailure(RuntimeError):
    """A non-finite value surfaced where the engine guarantees finiteness."""


def check_finite(arr, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericFailure(f"non-finite values in {what}")


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based splitmix64 generator.

    Output word i is ``mix64(seed + (i + 1) * GAMMA)`` with all arithmetic
    mod 2**64, where mix64 is the splitmix64 finalizer.  Normal variates use
    the Box-Muller transform with a fixed pairing convention, so identical
    seeds reproduce identical streams on any platform.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter) & _MASK64

    def state(self) -> tuple[int, int]:
        return (self.seed, self.counter)

    @classmethod
    def from_state(cls, state: tuple[int, int]) -> "Rng":
        return cls(state[0], state[1])

    def spawn(self, index: int) -> "Rng":
        """Derive an independent child stream (for parallel runs)."""
        z = np.uint64((self.seed ^ ((index + 1) * _GAMMA)) & _MASK64)
        return Rng(int(_mix64(np.uint64([z]))[0]))

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(self.counter)
        self.counter = (self.counter + n) & _MASK64
        state = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        return _mix64(state)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), from the top 53 bits of each word."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, n: int) -> np.ndarray:
        """n standard normal doubles (Box-Muller on consecutive word pairs)."""
        m = (n + 1) // 2
        k = (self.u64(2 * m) >> np.uint64(11)).astype(np.float64)
        u1 = (k[0::2] + 1.0) * _INV_2_53  # (0, 1], keeps log finite
        u2 = k[1::2] * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def randbelow(self, bound: int) -> int:
        """One integer in [0, bound), via the multiply-shift reduction."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return (int(self.u64(1)[0]) * bound) >> 64

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of one uniform draw)."""
        return np.argsort(self.uniform(n), kind="stable")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between a and b, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm input")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax, stabilized by max subtraction."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - np.max(z)
    e = np.exp(z)
    return e / np.sum(e)


def gaussian_sample(mean: np.ndarray, diag_var: np.ndarray, rng: Rng) -> np.ndarray:
    """One draw from N(mean, diag(diag_var))."""
    mean = np.asarray(mean, dtype=np.float64)
    diag_var = np.asarray(diag_var, dtype=np.float64)
    if mean.shape != diag_var.shape:
        raise ValueError(f"dimension mismatch: {mean.shape} vs {diag_var.shape}")
    if np.any(diag_var < 0.0):
        raise ValueError("variance entries must be non-negative")
    return mean + np.sqrt(diag_var) * rng.normal(mean.size)
