"""Online gradient estimators for recurrent models.

Each estimator produces, at every step, the loss ``l_{t+1}``, the new state
``s_{t+1}`` and a gradient estimate ``g_{t+1}`` for the *current* parameters.
None of them modifies ``theta``; updates belong to the optimizer.

* ``rtrl_step``: exact forward-mode gradient, dense ``ds/dtheta``.
* ``uoro_step``: rank-one unbiased estimate ``s_tilde ⊗ theta_tilde`` of ``ds/dtheta``.
* ``tbptt_step``: backprop through the last ``T`` transitions, older state held fixed.
* ``MemoryUORO``: UORO applied to the composite map of ``T`` consecutive steps.
* ``RankUORO``: ``r`` independent UORO tracks, gradients averaged.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import CounterRng, draw_signs, l2_norm
from .rankone import EPS


@dataclass
class StepResult:
    loss: float
    state: np.ndarray
    grad: np.ndarray
    output: np.ndarray = None
    # False on the inner steps of windowed estimators: no parameter update due.
    ready: bool = True


@dataclass
class UoroState:
    s_tilde: np.ndarray
    theta_tilde: np.ndarray

    @classmethod
    def zeros(cls, model):
        return cls(np.zeros(model.state_dim), np.zeros(model.param_dim))

    @property
    def size(self) -> int:
        return self.s_tilde.size + self.theta_tilde.size

    def matrix(self) -> np.ndarray:
        """Dense ``s_tilde ⊗ theta_tilde``; for tests only."""
        return np.outer(self.s_tilde, self.theta_tilde)


def _forward(model, loss, x, s, theta, target):
    s_new = model.state_forward(x, s, theta)
    o = model.out_forward(x, s, theta)
    return s_new, o, loss.value(o, target), loss.grad(o, target)


# --------------------------------------------------------------------- RTRL

def rtrl_step(model, loss, x, s, theta, jac, target):
    """One RTRL step. ``jac`` is ``ds_t/dtheta`` (state x params); returns the next one."""
    if jac.shape != (model.state_dim, model.param_dim):
        raise ValueError(f"Jacobian has shape {jac.shape}, expected {(model.state_dim, model.param_dim)}")
    s_new, o, ell, go = _forward(model, loss, x, s, theta, target)
    _, ds, dtheta = model.out_backprop(x, s, theta, go)
    grad = ds @ jac + dtheta
    js, jt = model.state_jacobians(x, s, theta)
    return StepResult(ell, s_new, grad, o), jt + js @ jac


# --------------------------------------------------------------------- UORO

def normalizers(theta_tilde, s_cand, dtheta_g, signs, eps=EPS):
    """Variance-minimizing scales for the two-term reduction, guarded by ``eps``."""
    rho0 = np.sqrt(l2_norm(theta_tilde) / (l2_norm(s_cand) + eps)) + eps
    rho1 = np.sqrt(l2_norm(dtheta_g) / (l2_norm(signs) + eps)) + eps
    return rho0, rho1


def _reduce_step(model, x, s, theta, ust, signs):
    s_cand = model.state_forwarddiff(x, s, theta, ust.s_tilde)
    _, _, dtheta_g = model.state_backprop(x, s, theta, signs)
    rho0, rho1 = normalizers(ust.theta_tilde, s_cand, dtheta_g, signs)
    return UoroState(rho0 * s_cand + rho1 * signs, ust.theta_tilde / rho0 + dtheta_g / rho1)


def uoro_step(model, loss, x, s, theta, ust: UoroState, target, rng: CounterRng = None, signs=None):
    """One step of UORO from ``t`` to ``t+1``.

    The gradient uses the incoming ``(s_tilde, theta_tilde)``; the returned
    estimator state is the reduced rank-one estimate of ``ds_{t+1}/dtheta``.
    Pass ``signs`` to fix the random sign vector (enumeration tests), otherwise
    it is drawn from ``rng``.
    """
    if ust.s_tilde.shape != (model.state_dim,) or ust.theta_tilde.shape != (model.param_dim,):
        raise ValueError("estimator state does not match model dimensions")
    s_new, o, ell, go = _forward(model, loss, x, s, theta, target)
    _, ds, dtheta = model.out_backprop(x, s, theta, go)
    grad = (ds @ ust.s_tilde) * ust.theta_tilde + dtheta
    if signs is None:
        signs = draw_signs(rng, model.state_dim)
    return StepResult(ell, s_new, grad, o), _reduce_step(model, x, s, theta, ust, signs)


# --------------------------------------------------------------- truncated BPTT

class TbpttBuffer:
    """Ring buffer of the most recent transitions ``(x_k, s_{k-1})``.

    A truncation ``T`` counts every application of the transition the
    gradient passes through. Models whose output already applies one
    transition keep ``T - 1`` earlier ones, the others keep ``T``.
    """

    def __init__(self, model, T: int):
        if T < 1:
            raise ValueError("truncation T must be >= 1")
        self.T = T
        self.capacity = T - int(model.out_applies_transition)
        self.records = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self.records)

    def push(self, x, s):
        if self.capacity:
            self.records.append((x, s))


def _backprop_transitions(model, theta, records, delta, dtheta):
    """Push state cotangent ``delta`` back through ``records`` (newest last)."""
    for x, s in reversed(records):
        _, delta, dt = model.state_backprop(x, s, theta, delta)
        dtheta = dtheta + dt
    return delta, dtheta


def tbptt_step(model, loss, buffer: TbpttBuffer, x, s, theta, target):
    """Gradient of ``l_{t+1}`` through at most ``T`` transitions.

    The state before the oldest buffered transition is treated as a constant.
    The current transition is appended to ``buffer`` afterwards.
    """
    s_new, o, ell, go = _forward(model, loss, x, s, theta, target)
    _, ds, dtheta = model.out_backprop(x, s, theta, go)
    _, grad = _backprop_transitions(model, theta, buffer.records, ds, dtheta)
    buffer.push(x, s)
    return StepResult(ell, s_new, grad, o), buffer


# ------------------------------------------------------------- window helpers

@dataclass
class _Record:
    x: np.ndarray
    s: np.ndarray          # state entering the step
    grad_out: np.ndarray   # dl/do at this step


def _window_loss_backprop(model, theta, window):
    """``d(sum of window losses)`` w.r.t. the window's start state and theta."""
    delta = dtheta = None
    for rec in reversed(window):
        _, ds, dt = model.out_backprop(rec.x, rec.s, theta, rec.grad_out)
        if delta is not None:
            _, ds_s, dt_s = model.state_backprop(rec.x, rec.s, theta, delta)
            ds, dt = ds + ds_s, dt + dt_s
        delta = ds
        dtheta = dt if dtheta is None else dtheta + dt
    return delta, dtheta


def composite_uoro_update(model, theta, window, ust: UoroState, signs):
    """UORO on the composite map of ``len(window)`` steps.

    Returns ``(grad, new_state)``: the gradient of the summed window loss,
    exact inside the window and estimated before it, and the reduced estimate
    of ``d s_end / d theta``.
    """
    ds_start, dtheta = _window_loss_backprop(model, theta, window)
    grad = (ds_start @ ust.s_tilde) * ust.theta_tilde + dtheta
    s_cand = ust.s_tilde
    for rec in window:
        s_cand = model.state_forwarddiff(rec.x, rec.s, theta, s_cand)
    delta, dtheta_g = signs, None
    for rec in reversed(window):
        _, delta, dt = model.state_backprop(rec.x, rec.s, theta, delta)
        dtheta_g = dt if dtheta_g is None else dtheta_g + dt
    rho0, rho1 = normalizers(ust.theta_tilde, s_cand, dtheta_g, signs)
    return grad, UoroState(rho0 * s_cand + rho1 * signs, ust.theta_tilde / rho0 + dtheta_g / rho1)


# ------------------------------------------------------------------ estimators

class Estimator:
    """Stateful driver: owns the recurrent state and the estimator memory."""

    name = "estimator"

    def __init__(self, model, loss):
        self.model = model
        self.loss = loss
        self.state = model.initial_state()

    def reset(self, state=None):
        self.state = self.model.initial_state() if state is None else np.array(state, dtype=np.float64)

    def step(self, x, target, theta) -> StepResult:
        raise NotImplementedError

    def memory_size(self) -> int:
        """Number of floats held by the estimator beyond the model state."""
        raise NotImplementedError


class RTRL(Estimator):
    name = "rtrl"

    def reset(self, state=None):
        super().reset(state)
        self.jac = np.zeros((self.model.state_dim, self.model.param_dim))

    def __init__(self, model, loss):
        super().__init__(model, loss)
        self.reset()

    def step(self, x, target, theta):
        res, self.jac = rtrl_step(self.model, self.loss, x, self.state, theta, self.jac, target)
        self.state = res.state
        return res

    def memory_size(self):
        return self.jac.size


class UORO(Estimator):
    name = "uoro"

    def __init__(self, model, loss, rng: CounterRng):
        super().__init__(model, loss)
        self.rng = rng
        self.reset()

    def reset(self, state=None):
        super().reset(state)
        self.ust = UoroState.zeros(self.model)

    def step(self, x, target, theta):
        res, self.ust = uoro_step(self.model, self.loss, x, self.state, theta, self.ust, target, self.rng)
        self.state = res.state
        return res

    def memory_size(self):
        return self.ust.size


class RankUORO(Estimator):
    """``r`` independent UORO tracks sharing the forward pass; gradients averaged."""

    name = "rank_k_uoro"

    def __init__(self, model, loss, rng: CounterRng, r: int):
        if r < 1:
            raise ValueError("rank r must be >= 1")
        super().__init__(model, loss)
        self.rng = rng
        self.r = r
        self.reset()

    def reset(self, state=None):
        super().reset(state)
        self.tracks = [UoroState.zeros(self.model) for _ in range(self.r)]

    def step(self, x, target, theta, signs=None):
        """``signs``, if given, is an ``r x state`` array fixing every track's draw."""
        m = self.model
        s = self.state
        s_new, o, ell, go = _forward(m, self.loss, x, s, theta, target)
        _, ds, dtheta = m.out_backprop(x, s, theta, go)
        grad = None
        new_tracks = []
        for i, ust in enumerate(self.tracks):
            g = (ds @ ust.s_tilde) * ust.theta_tilde + dtheta
            grad = g if grad is None else grad + g
            nu = draw_signs(self.rng, m.state_dim) if signs is None else signs[i]
            new_tracks.append(_reduce_step(m, x, s, theta, ust, nu))
        self.tracks = new_tracks
        self.state = s_new
        return StepResult(ell, s_new, grad / self.r, o)

    def memory_size(self):
        return sum(t.size for t in self.tracks)


class MemoryUORO(Estimator):
    """UORO over windows of ``T`` steps; exact backprop inside each window.

    Parameters must stay fixed within a window, so ``ready`` is only set on
    the last step of each window, whose ``grad`` is the gradient of the
    summed window loss.
    """

    name = "memory_t_uoro"

    def __init__(self, model, loss, rng: CounterRng, T: int):
        if T < 1:
            raise ValueError("memory T must be >= 1")
        super().__init__(model, loss)
        self.rng = rng
        self.T = T
        self.reset()

    def reset(self, state=None):
        super().reset(state)
        self.ust = UoroState.zeros(self.model)
        self.window = []

    def step(self, x, target, theta, signs=None):
        m = self.model
        s_new, o, ell, go = _forward(m, self.loss, x, self.state, theta, target)
        self.window.append(_Record(x, self.state, go))
        self.state = s_new
        if len(self.window) < self.T:
            return StepResult(ell, s_new, np.zeros(m.param_dim), o, ready=False)
        if signs is None:
            signs = draw_signs(self.rng, m.state_dim)
        grad, self.ust = composite_uoro_update(m, theta, self.window, self.ust, signs)
        self.window = []
        return StepResult(ell, s_new, grad, o)

    def memory_size(self):
        per_record = self.model.input_dim + 2 * self.model.state_dim
        return self.ust.size + len(self.window) * per_record


class TruncatedBPTT(Estimator):
    """Truncated BPTT in one of two schedules.

    ``sliding``: every step backpropagates its own loss through the last ``T``
    transitions and emits a gradient.
    ``chunked``: the stream is cut into consecutive windows; the window's
    summed loss is backpropagated to the state at the window start and one
    gradient is emitted when the window closes. Losses early in a window see
    few transitions, the last one sees ``T``.
    """

    name = "tbptt"

    def __init__(self, model, loss, T: int, mode: str = "sliding"):
        if T < 1:
            raise ValueError("truncation T must be >= 1")
        if mode not in ("sliding", "chunked"):
            raise ValueError(f"unknown truncated BPTT mode {mode!r}")
        super().__init__(model, loss)
        self.T = T
        self.mode = mode
        self.reset()

    def reset(self, state=None):
        super().reset(state)
        self.buffer = TbpttBuffer(self.model, self.T)
        self._clear_window()

    def _clear_window(self):
        self.window = []        # transitions (x_k, s_{k-1}) since the window start
        self.cotangents = []    # loss cotangent on the state each transition produced
        self.window_grad = None

    def step(self, x, target, theta):
        if self.mode == "sliding":
            res, self.buffer = tbptt_step(self.model, self.loss, self.buffer, x, self.state, theta, target)
            self.state = res.state
            return res
        m = self.model
        s = self.state
        s_new, o, ell, go = _forward(m, self.loss, x, s, theta, target)
        _, ds, dtheta = m.out_backprop(x, s, theta, go)
        self.window_grad = dtheta if self.window_grad is None else self.window_grad + dtheta
        if self.cotangents:
            self.cotangents[-1] = self.cotangents[-1] + ds
        depth = len(self.window) + int(m.out_applies_transition)
        ready = depth >= self.T
        grad = np.zeros(m.param_dim)
        if ready:
            delta, grad = None, self.window_grad
            for (xk, sk), ck in zip(reversed(self.window), reversed(self.cotangents)):
                delta = ck if delta is None else delta + ck
                _, delta, dt = m.state_backprop(xk, sk, theta, delta)
                grad = grad + dt
            self._clear_window()
        if not (ready and m.out_applies_transition):
            # otherwise this transition ends the window and s_new is the new boundary
            self.window.append((x, s))
            self.cotangents.append(np.zeros(m.state_dim))
        self.state = s_new
        return StepResult(ell, s_new, grad, o, ready=ready)

    def memory_size(self):
        per_record = self.model.input_dim + self.model.state_dim
        return (len(self.buffer) + len(self.window)) * per_record


def make_estimator(spec: dict, model, loss, rng: CounterRng) -> Estimator:
    """Build an estimator from ``{"name": ..., "T": ..., "r": ..., "mode": ...}``."""
    name = spec["name"]
    if name == "rtrl":
        return RTRL(model, loss)
    if name == "uoro":
        return UORO(model, loss, rng)
    if name == "tbptt":
        return TruncatedBPTT(model, loss, int(spec["T"]), spec.get("mode", "sliding"))
    if name == "memory_t_uoro":
        return MemoryUORO(model, loss, rng, int(spec["T"]))
    if name == "rank_k_uoro":
        return RankUORO(model, loss, rng, int(spec["r"]))
    raise ValueError(f"unknown algorithm {name!r}")
