"""Small numerical helpers and a counter-based random source.

Vectors and matrices are plain float64 numpy arrays. The random source is a
splitmix64 hash of (seed, stream, counter), so every draw is reproducible from
integers alone and does not depend on numpy's generator implementations.
"""
from __future__ import annotations

import itertools

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_MASK64 = (1 << 64) - 1


def _mix(z):
    """splitmix64 finalizer, elementwise on a uint64 array."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def splitmix64(x: int) -> int:
    """Scalar splitmix64 step: hash of ``x + golden``. Pure integer arithmetic."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class CounterRng:
    """Counter-based generator: word ``i`` is ``mix(key + (i + 1) * golden)``.

    ``key`` is derived from ``(seed, stream)`` so independent streams can be
    opened without coordination (one per record, per rank-k track, ...).
    The only mutable state is ``counter``.
    """

    def __init__(self, seed: int = 0, stream: int = 0, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self.counter = int(counter)
        self._key = np.uint64(splitmix64(splitmix64(self.seed) ^ splitmix64(self.stream + 0x5851F42D4C957F2D)))

    def words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(self._key + idx * _GOLDEN)

    def signs(self, n: int) -> np.ndarray:
        """``n`` independent ±1.0 values (top bit of each word)."""
        return np.where(self.words(n) >> np.uint64(63), 1.0, -1.0)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Floats on [low, high) from the top 53 bits of each word."""
        u = (self.words(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def integers(self, m: int, n: int) -> np.ndarray:
        """``n`` integers uniform on {0, ..., m-1}; modulo bias is below m / 2**64."""
        if m < 1:
            raise ValueError("m must be >= 1")
        return (self.words(n) % np.uint64(m)).astype(np.int64)

    def spawn(self, stream: int) -> "CounterRng":
        """Independent generator sharing this seed, keyed by ``stream``."""
        return CounterRng(self.seed, splitmix64(self.stream) ^ int(stream))

    def __repr__(self):
        return f"CounterRng(seed={self.seed}, stream={self.stream}, counter={self.counter})"


def draw_signs(rng: CounterRng, n: int) -> np.ndarray:
    """Vector of ``n`` independent random signs; advances ``rng`` by ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.signs(n)


def enumerate_all_signs(n: int) -> np.ndarray:
    """All 2**n sign vectors as rows, each exactly once."""
    return np.array(list(itertools.product((1.0, -1.0), repeat=n)), dtype=np.float64).reshape(-1, n)


def l2_norm(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(np.dot(v.ravel(), v.ravel())))


def outer(v, w) -> np.ndarray:
    return np.outer(v, w)


def dot(v, w) -> float:
    return float(np.dot(v, w))


def mat_vec(m, v) -> np.ndarray:
    return np.asarray(m) @ np.asarray(v)

