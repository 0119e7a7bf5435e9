"""Synthetic online tasks: influence balancing, distant brackets, a^n b^n.

Character streams are built record by record; record ``r`` draws its random
symbols from ``CounterRng(seed, stream=r)``, so any record can be regenerated
from ``(seed, r)`` alone.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass

import numpy as np

from .core import CounterRng
from .losses import CrossEntropyLoss, QuadraticLoss
from .models import InfluenceBalancing


# ------------------------------------------------------------ influence balancing

@dataclass(frozen=True)
class InfluenceBalancingTask:
    """Linear chain of ``n`` units, ``p`` of them driven by ``+theta`` and the rest by ``-theta``.

    The loss ``0.5 * (s_1 - 1)**2`` targets the shallowest unit.
    """

    n: int = 23
    p: int = 10

    def model(self) -> InfluenceBalancing:
        return InfluenceBalancing(self.n, self.p)

    def loss(self) -> QuadraticLoss:
        return QuadraticLoss(scale=0.5, units=[0])

    target = 1.0

    def stream(self):
        x = np.zeros(0)
        while True:
            yield x, self.target


def influence_step(task: InfluenceBalancingTask, s, theta: float) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (task.n,):
        raise ValueError(f"state must have length {task.n}")
    nxt = 0.5 * s
    nxt[:-1] += 0.5 * s[1:]
    nxt[:task.p] += theta
    nxt[task.p:] -= theta
    return nxt


def influence_loss(s) -> float:
    return 0.5 * (float(s[0]) - 1.0) ** 2


# ------------------------------------------------------------------ char streams

class CharStream:
    """Infinite text stream made of independently seeded records."""

    alphabet: str

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.index = {c: i for i, c in enumerate(self.alphabet)}

    def record(self, r: int) -> str:
        raise NotImplementedError

    def records(self, start: int = 0):
        for r in itertools.count(start):
            yield self.record(r)

    def chars(self):
        for rec in self.records():
            yield from rec

    def text(self, n_chars: int) -> str:
        return "".join(itertools.islice(self.chars(), n_chars))

    def encode(self, ch: str) -> int:
        return self.index[ch]

    def one_hot(self, i: int) -> np.ndarray:
        x = np.zeros(len(self.alphabet))
        x[i] = 1.0
        return x

    def pairs(self):
        """``(one-hot current char, index of next char)`` for every position."""
        chars = self.chars()
        prev = self.encode(next(chars))
        eye = np.eye(len(self.alphabet))
        for ch in chars:
            cur = self.encode(ch)
            yield eye[prev], cur
            prev = cur

    def loss(self) -> CrossEntropyLoss:
        return CrossEntropyLoss()

    def write(self, path, n_records: int):
        with open(path, "w", encoding="ascii", newline="") as fh:
            for rec in itertools.islice(self.records(), n_records):
                fh.write(rec)


class DistantBrackets(CharStream):
    """Records ``[c_1..c_s]r_1..r_k[c_1..c_s]\\n`` over the first ``a`` lowercase letters."""

    def __init__(self, s: int = 1, k: int = 5, a: int = 10, seed: int = 0):
        if s < 1 or k < 0 or not 2 <= a <= 26:
            raise ValueError(f"need s >= 1, k >= 0, 2 <= a <= 26; got s={s}, k={k}, a={a}")
        self.s, self.k, self.a = s, k, a
        self.letters = string.ascii_lowercase[:a]
        self.alphabet = self.letters + "[]\n"
        super().__init__(seed)

    def record(self, r: int) -> str:
        rng = CounterRng(self.seed, stream=r)
        inner = "".join(self.letters[i] for i in rng.integers(self.a, self.s))
        gap = "".join(self.letters[i] for i in rng.integers(self.a, self.k)) if self.k else ""
        return f"[{inner}]{gap}[{inner}]\n"


class AnBn(CharStream):
    """Blocks ``a^n \\n b^n \\n`` with ``n`` uniform on ``{k, ..., l}``."""

    alphabet = "ab\n"

    def __init__(self, k: int = 1, l: int = 32, seed: int = 0):
        if not 1 <= k <= l:
            raise ValueError(f"need 1 <= k <= l, got k={k}, l={l}")
        self.k, self.l = k, l
        super().__init__(seed)

    def block_length(self, r: int) -> int:
        return self.k + int(CounterRng(self.seed, stream=r).integers(self.l - self.k + 1, 1)[0])

    def record(self, r: int) -> str:
        n = self.block_length(r)
        return "a" * n + "\n" + "b" * n + "\n"


def gen_distant_brackets(s, k, a, seed) -> DistantBrackets:
    return DistantBrackets(s, k, a, seed)


def gen_anbn(k, l, seed) -> AnBn:
    return AnBn(k, l, seed)


def _run_code_length(n: int, k: int, l: int) -> float:
    """Bits to encode a run of length ``n`` (then its terminator) under the uniform prior."""
    bits = 0.0
    for j in range(k, n + 1):
        # after j symbols the run continues with prob (l-j)/(l-j+1) and stops with 1/(l-j+1)
        remaining = l - j + 1
        bits += -math.log2((remaining - 1) / remaining) if j < n else math.log2(remaining)
    return bits


def entropy_rate_anbn(k: int, l: int, with_memory: bool = True) -> float:
    """Optimal bits per character on a^n b^n(k, l), by exact expectation over ``n``.

    With memory the b-run is forced once the a-run is known; without it the
    b-run length is coded as a fresh uniform draw. Rate = expected code length
    per block / expected block length.
    """
    if not 1 <= k <= l:
        raise ValueError(f"need 1 <= k <= l, got k={k}, l={l}")
    ns = range(k, l + 1)
    prob = 1.0 / len(ns)
    code = 0.0
    length = 0.0
    for n in ns:
        bits = _run_code_length(n, k, l)
        if not with_memory:
            bits *= 2.0
        code += prob * bits
        length += prob * (2 * n + 2)
    return code / length


def make_task(spec: dict, seed: int):
    name = spec["name"]
    if name == "influence_balancing":
        return InfluenceBalancingTask(int(spec.get("n", 23)), int(spec.get("p", 10)))
    if name == "distant_brackets":
        return DistantBrackets(int(spec.get("s", 1)), int(spec.get("k", 5)), int(spec.get("a", 10)), seed)
    if name == "anbn":
        return AnBn(int(spec.get("k", 1)), int(spec.get("l", 32)), seed)
    raise ValueError(f"unknown task {name!r}")
