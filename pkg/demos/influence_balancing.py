#!/usr/bin/env python3
# Influence balancing: a scalar θ pushes 10 units up and 13 units down. The
# shallow unit feels the helpful +θ first and the harmful −θ only much later,
# so short truncations see the gradient with the wrong sign.

import numpy as np

from uoro.algorithms import RTRL, TruncatedBPTT
from uoro.harness import RunConfig, run
from uoro.losses import QuadraticLoss
from uoro.models import InfluenceBalancing

model = InfluenceBalancing(23, 10)
loss = QuadraticLoss(0.5, [0])

# %% gradients at θ = 0 once the transient has died out
theta = np.zeros(1)
ests = {"exact": RTRL(model, loss)}
ests.update({f"T={T}": TruncatedBPTT(model, loss, T) for T in (1, 10, 50, 100)})
for _ in range(500):
    grads = {k: e.step(np.zeros(0), 1.0, theta).grad[0] for k, e in ests.items()}
for k, g in grads.items():
    print(f"{k:>6}: dℓ/dθ = {g:+.4f}")

# %% online SGD, η_t = η/(1+√t): UORO settles, 10-truncated BPTT does not
for algo in ({"name": "uoro"}, {"name": "tbptt", "T": 10, "mode": "chunked"},
             {"name": "tbptt", "T": 200, "mode": "chunked"}):
    cfg = RunConfig(task={"name": "influence_balancing", "n": 23, "p": 10}, algorithm=algo,
                    optimizer={"name": "sgd", "eta": 1e-3}, horizon=20_000)
    res = run(cfg)
    status = f"diverged at step {res.divergence_step}" if res.diverged else "completed"
    print(f"{res.config.name:<40} {status:<26} final loss {res.final['inst_loss']:.3e} θ = {res.theta[0]:+.4f}")
print("fixed point θ* =", -1 / 6)
