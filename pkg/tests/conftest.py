import numpy as np
import pytest

from uoro.losses import CrossEntropyLoss, QuadraticLoss
from uoro.models import GRU, LSTM, InfluenceBalancing, TanhRNN

CS_H = 1e-30


def cs_jacobian(f, v):
    """Complex-step Jacobian of ``f`` at real ``v``: exact to rounding, no cancellation."""
    v = np.asarray(v, dtype=np.float64)
    cols = []
    for j in range(v.size):
        vc = v.astype(np.complex128)
        vc[j] += CS_H * 1j
        cols.append(np.imag(f(vc)) / CS_H)
    out_dim = np.asarray(f(v)).size
    return np.array(cols).T.reshape(out_dim, v.size)


def cs_state_jacobians(model, x, s, theta):
    js = cs_jacobian(lambda z: model.state_forward(x, z, theta), s)
    jt = cs_jacobian(lambda z: model.state_forward(x, s, z), theta)
    return js, jt


def cs_out_jacobians(model, x, s, theta):
    js = cs_jacobian(lambda z: model.out_forward(x, z, theta), s)
    jt = cs_jacobian(lambda z: model.out_forward(x, s, z), theta)
    return js, jt


def central_diff(f, v, h=1e-5):
    v = np.asarray(v, dtype=np.float64)
    g = np.empty(v.size)
    for j in range(v.size):
        e = np.zeros_like(v)
        e[j] = h
        g[j] = (f(v + e) - f(v - e)) / (2 * h)
    return g


MODEL_KINDS = ["rnn", "gru", "lstm", "linear"]


def make_tiny(kind, rng, scale=0.5):
    """Tiny model with parameters U(-scale, scale), a loss and a target sampler."""
    if kind == "linear":
        model = InfluenceBalancing(4, 1)
        theta = rng.uniform(-scale, scale, 1)
        return model, theta, QuadraticLoss(0.5, [0]), lambda: 1.0
    cls = {"rnn": TanhRNN, "gru": GRU, "lstm": LSTM}[kind]
    hidden = 2 if kind == "lstm" else 3
    model = cls(2, hidden, 3)
    theta = rng.uniform(-scale, scale, model.param_dim)
    return model, theta, CrossEntropyLoss(), lambda: int(rng.integers(3))


def random_point(model, rng):
    x = rng.uniform(-1, 1, model.input_dim)
    s = rng.uniform(-1, 1, model.state_dim)
    return x, s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one acceptance line; all lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def _report(label, ok, detail=""):
        lines.append(f"criterion {label:<3} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
