#!/usr/bin/env python3
# a^n b^n: to predict where the b-run ends a model has to count. The entropy
# oracle says how well a perfect counter and a memoryless predictor can do.

from pathlib import Path

from uoro.harness import RunConfig, plot, run
from uoro.tasks import AnBn, entropy_rate_anbn

task = AnBn(1, 8, seed=0)
print(repr(task.text(60)))

# %% floors, in bits per character
for k, l in ((1, 8), (1, 32)):
    print(f"({k},{l}): counter {entropy_rate_anbn(k, l):.4f} bpc, no memory {entropy_rate_anbn(k, l, False):.4f} bpc")

# %% short online runs with a 16-unit GRU (the full comparison takes 5e5 characters)
out = Path("demo_out")
paths = []
for algo in ({"name": "uoro"}, {"name": "tbptt", "T": 1}):
    cfg = RunConfig(task={"name": "anbn", "k": 1, "l": 8}, model={"cell": "gru", "hidden": 16},
                    algorithm=algo, optimizer={"name": "adam", "gamma": 1e-3, "alpha": 0.03},
                    horizon=50_000, window=10_000)
    res = run(cfg, out / f"{cfg.resolved().name}.csv")
    paths.append(res.path)
    print(f"{res.config.name}: last 1e4 chars {res.final['trail_avg']:.3f} bpc")

print("figure:", plot(paths, out / "anbn.png"))
