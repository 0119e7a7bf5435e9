"""Recurrent models exposing forward, backprop and tangent-forward evaluation.

Every model maps ``(x, s, theta)`` to the next state through ``state_forward``
and to an output through ``out_forward``. The output of the neural models is a
readout of the *new* state, ``W_o h(state_forward(x, s, theta)) + b_o``, so
``out_forward`` depends on ``theta`` both directly and through the transition.

Forward passes accept complex arrays so tests can differentiate them with the
complex-step method; backprop and tangent passes are real-only.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import CounterRng


def _arr(v) -> np.ndarray:
    v = np.asarray(v)
    if np.iscomplexobj(v) or v.dtype == np.float64:
        return v
    return v.astype(np.float64)


def _sigmoid(a):
    if np.iscomplexobj(a):
        return 1.0 / (1.0 + np.exp(-a))
    return expit(a)


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: tuple
    size: int


class ParamLayout:
    """Named, contiguous, non-overlapping blocks of a flat parameter vector."""

    def __init__(self, blocks):
        self.segments = {}
        offset = 0
        for name, shape in blocks:
            if name in self.segments:
                raise ValueError(f"duplicate segment {name!r}")
            seg = Segment(name, offset, tuple(shape), math.prod(shape))
            self.segments[name] = seg
            offset += seg.size
        self.size = offset
        self._slices = [(g.name, g.offset, g.offset + g.size, g.shape) for g in self.segments.values()]

    def __iter__(self):
        return iter(self.segments.values())

    def __contains__(self, name):
        return name in self.segments

    def unpack(self, theta) -> dict:
        """Views of ``theta`` reshaped per block (no copies)."""
        if theta.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {theta.shape}, expected ({self.size},)")
        return {name: theta[a:b].reshape(shape) for name, a, b, shape in self._slices}

    def pack(self, blocks: dict) -> np.ndarray:
        """Flatten a (possibly partial) dict of blocks; missing blocks are zero."""
        out = np.zeros(self.size)
        for name, value in blocks.items():
            g = self.segments[name]
            out[g.offset:g.offset + g.size] = np.ravel(value)
        return out

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)


class RecurrentModel:
    """Base class: dimension checks, call counters, dense Jacobians.

    Subclasses implement ``_state_forward``, ``_out_forward``, ``_state_backprop``,
    ``_out_backprop`` and ``_state_forwarddiff``. The public wrappers validate
    shapes and count calls, which is how per-step costs are asserted in tests.
    """

    state_dim: int
    input_dim: int
    output_dim: int
    layout: ParamLayout
    # True when out_forward reads the new state, i.e. contains one transition.
    out_applies_transition = False

    def __init__(self):
        self.calls = Counter()

    @property
    def param_dim(self) -> int:
        return self.layout.size

    def _check(self, x, s, theta):
        if x.shape != (self.input_dim,):
            raise ValueError(f"input has shape {x.shape}, expected ({self.input_dim},)")
        if s.shape != (self.state_dim,):
            raise ValueError(f"state has shape {s.shape}, expected ({self.state_dim},)")
        if theta.shape != (self.param_dim,):
            raise ValueError(f"parameters have shape {theta.shape}, expected ({self.param_dim},)")

    def _check_vec(self, v, n, what):
        if v.shape != (n,):
            raise ValueError(f"{what} has shape {v.shape}, expected ({n},)")

    def state_forward(self, x, s, theta) -> np.ndarray:
        x, s, theta = _arr(x), _arr(s), _arr(theta)
        self._check(x, s, theta)
        self.calls["state_forward"] += 1
        return self._state_forward(x, s, theta)

    def out_forward(self, x, s, theta) -> np.ndarray:
        x, s, theta = _arr(x), _arr(s), _arr(theta)
        self._check(x, s, theta)
        self.calls["out_forward"] += 1
        return self._out_forward(x, s, theta)

    def state_backprop(self, x, s, theta, delta):
        """Row ``delta`` times the Jacobians of the transition: ``(dx, ds, dtheta)``."""
        x, s, theta, delta = _arr(x), _arr(s), _arr(theta), _arr(delta)
        self._check(x, s, theta)
        self._check_vec(delta, self.state_dim, "state cotangent")
        self.calls["state_backprop"] += 1
        return self._state_backprop(x, s, theta, delta)

    def out_backprop(self, x, s, theta, delta):
        """Row ``delta`` times the Jacobians of the output map: ``(dx, ds, dtheta)``."""
        x, s, theta, delta = _arr(x), _arr(s), _arr(theta), _arr(delta)
        self._check(x, s, theta)
        self._check_vec(delta, self.output_dim, "output cotangent")
        self.calls["out_backprop"] += 1
        return self._out_backprop(x, s, theta, delta)

    def state_forwarddiff(self, x, s, theta, v) -> np.ndarray:
        """``(dF_state/ds) v`` computed analytically (x and theta directions are zero)."""
        x, s, theta, v = _arr(x), _arr(s), _arr(theta), _arr(v)
        self._check(x, s, theta)
        self._check_vec(v, self.state_dim, "state tangent")
        self.calls["state_forwarddiff"] += 1
        return self._state_forwarddiff(x, s, theta, v)

    def state_jacobians(self, x, s, theta):
        """Dense ``(dF_state/ds, dF_state/dtheta)``, one backprop per state unit.

        Costs ``state_dim`` backprops; only RTRL and test oracles use it.
        """
        x, s, theta = _arr(x), _arr(s), _arr(theta)
        self._check(x, s, theta)
        n = self.state_dim
        js = np.empty((n, n))
        jt = np.empty((n, self.param_dim))
        eye = np.eye(n)
        for i in range(n):
            _, js[i], jt[i] = self._state_backprop(x, s, theta, eye[i])
        return js, jt

    def init_params(self, rng: CounterRng) -> np.ndarray:
        """Weights ``U(-r, r)`` with ``r = 1/sqrt(fan_in)``, biases zero."""
        theta = self.layout.zeros()
        views = self.layout.unpack(theta)
        for seg in self.layout:
            if len(seg.shape) == 2:
                r = 1.0 / np.sqrt(seg.shape[1])
                views[seg.name][...] = rng.uniform(seg.size, -r, r).reshape(seg.shape)
        return theta

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)


class InfluenceBalancing(RecurrentModel):
    """Linear chain ``s' = A s + theta * c`` with identity readout ``o = s``.

    ``A`` has 1/2 on the diagonal and superdiagonal; ``c`` holds ``p`` entries
    +1 followed by ``n - p`` entries -1. The single parameter is ``theta``.
    """

    def __init__(self, n: int, p: int):
        super().__init__()
        if n < 1 or not 0 <= p <= n:
            raise ValueError(f"need n >= 1 and 0 <= p <= n, got n={n}, p={p}")
        self.n, self.p = n, p
        self.state_dim = n
        self.input_dim = 0
        self.output_dim = n
        self.layout = ParamLayout([("theta", (1,))])
        self.signs = np.concatenate([np.ones(p), -np.ones(n - p)])

    def _apply_a(self, v):
        out = 0.5 * v
        out[:-1] += 0.5 * v[1:]
        return out

    def _apply_a_transpose(self, v):
        out = 0.5 * v
        out[1:] += 0.5 * v[:-1]
        return out

    def matrix(self) -> np.ndarray:
        return 0.5 * (np.eye(self.n) + np.eye(self.n, k=1))

    def _state_forward(self, x, s, theta):
        return self._apply_a(s) + theta[0] * self.signs

    def _out_forward(self, x, s, theta):
        return s.copy()

    def _state_backprop(self, x, s, theta, delta):
        return np.zeros(0), self._apply_a_transpose(delta), np.array([delta @ self.signs])

    def _out_backprop(self, x, s, theta, delta):
        return np.zeros(0), delta.copy(), np.zeros(1)

    def _state_forwarddiff(self, x, s, theta, v):
        return self._apply_a(v)

    def state_jacobians(self, x, s, theta):
        return self.matrix(), self.signs.reshape(-1, 1).copy()

    def init_params(self, rng=None):
        return np.zeros(1)


class ReadoutModel(RecurrentModel):
    """Cell plus affine readout ``o = W_o h(s') + b_o`` of the new state ``s'``.

    Subclasses provide the cell through ``_cell`` (forward with a cache),
    ``_cell_backprop``, ``_cell_tangent``, ``_hidden`` and ``_hidden_backprop``.
    """

    out_applies_transition = True

    def __init__(self, input_dim, hidden_dim, output_dim, state_dim, cell_blocks):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_dim = output_dim
        self.state_dim = state_dim
        self.layout = ParamLayout(list(cell_blocks) + [("W_o", (output_dim, hidden_dim)), ("b_o", (output_dim,))])

    def _state_forward(self, x, s, theta):
        return self._cell(x, s, self.layout.unpack(theta))[0]

    def _out_forward(self, x, s, theta):
        P = self.layout.unpack(theta)
        s_new, _ = self._cell(x, s, P)
        return P["W_o"] @ self._hidden(s_new) + P["b_o"]

    def _state_backprop(self, x, s, theta, delta):
        P = self.layout.unpack(theta)
        _, cache = self._cell(x, s, P)
        dx, ds, grads = self._cell_backprop(cache, P, delta)
        return dx, ds, self.layout.pack(grads)

    def _out_backprop(self, x, s, theta, delta):
        P = self.layout.unpack(theta)
        s_new, cache = self._cell(x, s, P)
        h = self._hidden(s_new)
        d_new = self._hidden_backprop(s_new, P["W_o"].T @ delta)
        dx, ds, grads = self._cell_backprop(cache, P, d_new)
        grads["W_o"] = np.outer(delta, h)
        grads["b_o"] = delta
        return dx, ds, self.layout.pack(grads)

    def _state_forwarddiff(self, x, s, theta, v):
        P = self.layout.unpack(theta)
        _, cache = self._cell(x, s, P)
        return self._cell_tangent(cache, P, v)


class TanhRNN(ReadoutModel):
    """``s' = W_x x + W_s tanh(s) + b``, ``o = W_o tanh(s') + b_o``; state holds preactivations."""

    def __init__(self, input_dim, hidden_dim, output_dim):
        n = hidden_dim
        super().__init__(input_dim, n, output_dim, n,
                         [("W_x", (n, input_dim)), ("W_s", (n, n)), ("b", (n,))])

    def _cell(self, x, s, P):
        a = np.tanh(s)
        return P["W_x"] @ x + P["W_s"] @ a + P["b"], (x, a)

    def _cell_backprop(self, cache, P, g):
        x, a = cache
        dx = P["W_x"].T @ g
        ds = (P["W_s"].T @ g) * (1.0 - a * a)
        return dx, ds, {"W_x": np.outer(g, x), "W_s": np.outer(g, a), "b": g}

    def _cell_tangent(self, cache, P, v):
        _, a = cache
        return P["W_s"] @ ((1.0 - a * a) * v)

    def _hidden(self, s_new):
        return np.tanh(s_new)

    def _hidden_backprop(self, s_new, dh):
        t = np.tanh(s_new)
        return dh * (1.0 - t * t)


class GRU(ReadoutModel):
    """Standard GRU cell; state is ``h``.

    ``z = σ(W_z x + U_z h + b_z)``, ``r = σ(W_r x + U_r h + b_r)``,
    ``n = tanh(W_n x + U_n (r*h) + b_n)``, ``h' = (1-z)*n + z*h``.
    Readout from ``h'``.
    """

    def __init__(self, input_dim, hidden_dim, output_dim):
        n, m = hidden_dim, input_dim
        blocks = []
        for g in "zrn":
            blocks += [(f"W_{g}", (n, m)), (f"U_{g}", (n, n)), (f"b_{g}", (n,))]
        super().__init__(input_dim, n, output_dim, n, blocks)

    def _cell(self, x, h, P):
        z = _sigmoid(P["W_z"] @ x + P["U_z"] @ h + P["b_z"])
        r = _sigmoid(P["W_r"] @ x + P["U_r"] @ h + P["b_r"])
        rh = r * h
        n = np.tanh(P["W_n"] @ x + P["U_n"] @ rh + P["b_n"])
        return (1.0 - z) * n + z * h, (x, h, z, r, rh, n)

    def _cell_backprop(self, cache, P, g):
        x, h, z, r, rh, n = cache
        dan = g * (1.0 - z) * (1.0 - n * n)
        daz = g * (h - n) * z * (1.0 - z)
        drh = P["U_n"].T @ dan
        dar = drh * h * r * (1.0 - r)
        dx = P["W_z"].T @ daz + P["W_r"].T @ dar + P["W_n"].T @ dan
        dh = g * z + drh * r + P["U_z"].T @ daz + P["U_r"].T @ dar
        grads = {
            "W_z": np.outer(daz, x), "U_z": np.outer(daz, h), "b_z": daz,
            "W_r": np.outer(dar, x), "U_r": np.outer(dar, h), "b_r": dar,
            "W_n": np.outer(dan, x), "U_n": np.outer(dan, rh), "b_n": dan,
        }
        return dx, dh, grads

    def _cell_tangent(self, cache, P, v):
        x, h, z, r, rh, n = cache
        dz = z * (1.0 - z) * (P["U_z"] @ v)
        dr = r * (1.0 - r) * (P["U_r"] @ v)
        dn = (1.0 - n * n) * (P["U_n"] @ (dr * h + r * v))
        return dz * (h - n) + (1.0 - z) * dn + z * v

    def _hidden(self, s_new):
        return s_new

    def _hidden_backprop(self, s_new, dh):
        return dh


class LSTM(ReadoutModel):
    """Standard LSTM without peepholes; state is the concatenation ``(h, c)``.

    Gates are stacked in the order input, forget, candidate, output inside
    ``W_x`` (4n x m), ``W_h`` (4n x n) and ``b`` (4n). Readout from ``h'``.
    """

    def __init__(self, input_dim, hidden_dim, output_dim):
        n, m = hidden_dim, input_dim
        super().__init__(input_dim, n, output_dim, 2 * n,
                         [("W_x", (4 * n, m)), ("W_h", (4 * n, n)), ("b", (4 * n,))])

    def _cell(self, x, s, P):
        n = self.hidden_dim
        h, c = s[:n], s[n:]
        a = P["W_x"] @ x + P["W_h"] @ h + P["b"]
        i = _sigmoid(a[:n])
        f = _sigmoid(a[n:2 * n])
        g = np.tanh(a[2 * n:3 * n])
        o = _sigmoid(a[3 * n:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        return np.concatenate([o * tc, c_new]), (x, h, c, i, f, g, o, tc)

    def _cell_backprop(self, cache, P, delta):
        x, h, c, i, f, g, o, tc = cache
        n = self.hidden_dim
        dh_new, dc_new = delta[:n], delta[n:]
        dc_tot = dc_new + dh_new * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc_tot * g * i * (1.0 - i),
            dc_tot * c * f * (1.0 - f),
            dc_tot * i * (1.0 - g * g),
            dh_new * tc * o * (1.0 - o),
        ])
        dx = P["W_x"].T @ da
        ds = np.concatenate([P["W_h"].T @ da, dc_tot * f])
        return dx, ds, {"W_x": np.outer(da, x), "W_h": np.outer(da, h), "b": da}

    def _cell_tangent(self, cache, P, v):
        x, h, c, i, f, g, o, tc = cache
        n = self.hidden_dim
        vh, vc = v[:n], v[n:]
        da = P["W_h"] @ vh
        di = i * (1.0 - i) * da[:n]
        df = f * (1.0 - f) * da[n:2 * n]
        dg = (1.0 - g * g) * da[2 * n:3 * n]
        do = o * (1.0 - o) * da[3 * n:]
        dc_new = df * c + f * vc + di * g + i * dg
        return np.concatenate([do * tc + o * (1.0 - tc * tc) * dc_new, dc_new])

    def _hidden(self, s_new):
        return s_new[:self.hidden_dim]

    def _hidden_backprop(self, s_new, dh):
        return np.concatenate([dh, np.zeros(self.hidden_dim)])

    def init_params(self, rng):
        theta = super().init_params(rng)
        n = self.hidden_dim
        self.layout.unpack(theta)["b"][n:2 * n] = 1.0
        return theta


CELLS = {"rnn": TanhRNN, "tanh": TanhRNN, "gru": GRU, "lstm": LSTM}


def make_cell_model(cell: str, input_dim: int, hidden_dim: int, output_dim: int) -> ReadoutModel:
    try:
        cls = CELLS[cell.lower()]
    except KeyError:
        raise ValueError(f"unknown cell type {cell!r}; choose from {sorted(CELLS)}") from None
    return cls(input_dim, hidden_dim, output_dim)
