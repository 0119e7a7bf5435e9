"""Per-step losses with exact gradients with respect to the model output."""
from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)


class QuadraticLoss:
    """``scale * sum((o[units] - target)**2)``.

    ``scale=0.5, units=[0], target=1`` gives the influence-balancing loss on the
    shallowest unit.
    """

    def __init__(self, scale: float = 1.0, units=None):
        self.scale = scale
        self.units = None if units is None else np.asarray(units, dtype=int)

    def _residual(self, o, target):
        o = np.asarray(o)
        sel = o if self.units is None else o[self.units]
        return sel - target

    def value(self, o, target) -> float:
        r = self._residual(o, target)
        return self.scale * float(np.sum(r * r))

    def grad(self, o, target) -> np.ndarray:
        r = self._residual(o, target)
        g = np.zeros(np.shape(o))
        if self.units is None:
            g[...] = 2.0 * self.scale * r
        else:
            np.add.at(g, self.units, 2.0 * self.scale * r)
        return g


class CrossEntropyLoss:
    """Softmax cross-entropy of logits against a target symbol index, in nats."""

    def _check(self, o, target):
        if not 0 <= int(target) < len(o):
            raise ValueError(f"target index {target} outside alphabet of size {len(o)}")

    def value(self, o, target) -> float:
        self._check(o, target)
        m = np.max(o)
        return float(m + np.log(np.sum(np.exp(o - m))) - o[int(target)])

    def grad(self, o, target) -> np.ndarray:
        self._check(o, target)
        e = np.exp(o - np.max(o))
        g = e / np.sum(e)
        g[int(target)] -= 1.0
        return g


def nats_to_bits(x):
    return x / LN2
