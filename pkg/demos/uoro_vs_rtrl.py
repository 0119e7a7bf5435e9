#!/usr/bin/env python3
# UORO keeps a rank-one guess s̃ ⊗ θ̃ of the Jacobian ds/dθ that RTRL tracks
# exactly. Run both on the same stream and compare the gradient estimates.

import numpy as np

from uoro.algorithms import RTRL, UORO, RankUORO
from uoro.core import CounterRng
from uoro.losses import CrossEntropyLoss
from uoro.models import GRU

rng = np.random.default_rng(1)
model = GRU(3, 6, 3)
theta = model.init_params(CounterRng(0))
loss = CrossEntropyLoss()
xs = np.eye(3)[rng.integers(3, size=50)]
ys = rng.integers(3, size=50)

# %% memory: RTRL stores state_dim x param_dim numbers, UORO stores state_dim + param_dim
rtrl = RTRL(model, loss)
print("params", model.param_dim, "| RTRL memory", rtrl.memory_size(),
      "| UORO memory", UORO(model, loss, CounterRng(0)).memory_size())

# %% exact gradients along the stream
exact = np.array([rtrl.step(x, y, theta).grad for x, y in zip(xs, ys)])

# %% many independent UORO runs: each is noisy, their average tracks RTRL
def uoro_grads(seed, r=1):
    est = RankUORO(model, loss, CounterRng(seed), r)
    return np.array([est.step(x, y, theta).grad for x, y in zip(xs, ys)])

runs = np.array([uoro_grads(seed) for seed in range(300)])
t = 49
cos = exact[t] @ runs[:, t].T / (np.linalg.norm(exact[t]) * np.linalg.norm(runs[:, t], axis=1))
print(f"\nstep {t + 1}: cosine(single UORO run, RTRL) median {np.median(cos):.2f}")
mean = runs[:, t].mean(axis=0)
print("cosine(mean of 300 runs, RTRL)", round(float(mean @ exact[t] / np.linalg.norm(mean) / np.linalg.norm(exact[t])), 3))

# %% more tracks, less noise
for r in (1, 4, 16):
    g = np.array([uoro_grads(seed, r)[t] for seed in range(100)])
    print(f"rank {r:>2}: mean squared error {np.mean(np.sum((g - exact[t]) ** 2, axis=1)):.4f}")
