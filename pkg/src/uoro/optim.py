"""Parameter updates and learning-rate schedules.

Optimizers see only ``(grad, lr, theta)`` and return new parameters; they never
touch the model or the task.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


def sgd_update(theta, grad, lr):
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return theta - lr * grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim, **kw):
        return cls(np.zeros(dim), np.zeros(dim), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        # float.hex keeps the round trip exact
        d["m"] = [float(x).hex() for x in self.m]
        d["v"] = [float(x).hex() for x in self.v]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["m"] = np.array([float.fromhex(x) for x in d["m"]])
        d["v"] = np.array([float.fromhex(x) for x in d["v"]])
        return cls(**d)


def adam_update(state: AdamState, theta, grad, lr):
    """Adam with bias correction; returns ``(new_state, new_theta)``."""
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = AdamState(m, v, t, state.beta1, state.beta2, state.eps)
    return new, theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)


class SGD:
    name = "sgd"

    def update(self, grad, lr, theta):
        return sgd_update(theta, grad, lr)


class Adam:
    name = "adam"

    def __init__(self, dim, beta1=0.9, beta2=0.999, eps=1e-8):
        self.state = AdamState.zeros(dim, beta1=beta1, beta2=beta2, eps=eps)

    def update(self, grad, lr, theta):
        self.state, theta = adam_update(self.state, theta, grad, lr)
        return theta


@dataclass(frozen=True)
class InverseSqrtSchedule:
    """``eta / (1 + sqrt(t))``."""

    eta: float

    def __call__(self, t):
        return self.eta / (1.0 + math.sqrt(t))


@dataclass(frozen=True)
class DecayingSchedule:
    """``gamma / (1 + alpha * sqrt(t))``."""

    gamma: float
    alpha: float

    def __call__(self, t):
        return self.gamma / (1.0 + self.alpha * math.sqrt(t))


def lr_at(schedule, t) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    return schedule(t)


def make_schedule(spec: dict):
    if "gamma" in spec:
        return DecayingSchedule(float(spec["gamma"]), float(spec["alpha"]))
    return InverseSqrtSchedule(float(spec["eta"]))


def make_optimizer(name: str, dim: int):
    if name == "sgd":
        return SGD()
    if name == "adam":
        return Adam(dim)
    raise ValueError(f"unknown optimizer {name!r}")
