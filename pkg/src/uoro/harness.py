"""Single-pass online training runs, sweeps, metric files and plots."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import make_estimator
from .core import CounterRng
from .losses import LN2
from .models import make_cell_model
from .optim import make_optimizer, make_schedule
from .tasks import InfluenceBalancingTask, make_task

log = logging.getLogger(__name__)

COLUMNS = ("step", "inst_loss", "cum_avg", "trail_avg", "lr", "diverged")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: dict = field(default_factory=lambda: {"name": "influence_balancing", "n": 23, "p": 10})
    model: dict = field(default_factory=lambda: {"cell": "gru", "hidden": 16})
    algorithm: dict = field(default_factory=lambda: {"name": "uoro"})
    optimizer: dict = field(default_factory=lambda: {"name": "sgd", "eta": 1e-3})
    seed_data: int = 0
    seed_signs: int = 0
    seed_init: int = 0
    horizon: int = 100_000
    log_every: int = None
    window: int = None
    divergence_factor: float = 1e6
    name: str = None

    @property
    def is_text(self) -> bool:
        return self.task["name"] != "influence_balancing"

    def resolved(self) -> "RunConfig":
        """Copy with cadence and window defaults filled in."""
        cfg = copy.deepcopy(self).validate()
        if cfg.log_every is None:
            cfg.log_every = 1000 if cfg.is_text else 1
        if cfg.window is None:
            cfg.window = 100_000 if cfg.is_text else 1000
        if cfg.name is None:
            cfg.name = default_name(cfg)
        return cfg

    def validate(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.task.get("name") not in ("influence_balancing", "distant_brackets", "anbn"):
            raise ConfigError(f"unknown task {self.task.get('name')!r}")
        algo = self.algorithm.get("name")
        if algo not in ("uoro", "rtrl", "tbptt", "memory_t_uoro", "rank_k_uoro"):
            raise ConfigError(f"unknown algorithm {algo!r}")
        if algo in ("tbptt", "memory_t_uoro") and int(self.algorithm.get("T", 0)) < 1:
            raise ConfigError(f"{algo} needs an integer T >= 1")
        if algo == "rank_k_uoro" and int(self.algorithm.get("r", 0)) < 1:
            raise ConfigError("rank_k_uoro needs an integer r >= 1")
        if self.optimizer.get("name") not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer.get('name')!r}")
        if "eta" not in self.optimizer and not {"gamma", "alpha"} <= set(self.optimizer):
            raise ConfigError("optimizer needs eta, or gamma and alpha")
        if self.is_text and self.model.get("cell", "gru").lower() not in ("gru", "lstm", "rnn", "tanh"):
            raise ConfigError(f"unknown cell {self.model.get('cell')!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def default_name(cfg: RunConfig) -> str:
    a = cfg.algorithm
    algo = a["name"]
    if algo == "tbptt":
        algo = f"tbptt{a['T']}" + ("c" if a.get("mode") == "chunked" else "")
    elif algo == "memory_t_uoro":
        algo = f"uoro_mem{a['T']}"
    elif algo == "rank_k_uoro":
        algo = f"uoro_rank{a['r']}"
    lr = cfg.optimizer.get("eta", cfg.optimizer.get("gamma"))
    parts = [cfg.task["name"], algo, f"lr{lr:g}"]
    if cfg.is_text:
        parts.insert(1, f"{cfg.model.get('cell', 'gru')}{cfg.model.get('hidden', 16)}")
    return "_".join(parts)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_dict(json.load(fh))


@dataclass
class RunResult:
    config: RunConfig
    rows: list
    diverged: bool
    divergence_step: int = None
    reason: str = ""
    theta: np.ndarray = None
    path: Path = None

    @property
    def final(self) -> dict:
        return self.rows[-1] if self.rows else {}

    @property
    def exit_code(self) -> int:
        return 2 if self.diverged else 0


def _setup(cfg: RunConfig):
    task = make_task(cfg.task, cfg.seed_data)
    if isinstance(task, InfluenceBalancingTask):
        model = task.model()
        theta = model.init_params()
        stream = task.stream()
        loss = task.loss()
    else:
        k = len(task.alphabet)
        model = make_cell_model(cfg.model.get("cell", "gru"), k, int(cfg.model.get("hidden", 16)), k)
        theta = model.init_params(CounterRng(cfg.seed_init))
        stream = task.pairs()
        loss = task.loss()
    est = make_estimator(cfg.algorithm, model, loss, CounterRng(cfg.seed_signs))
    return model, theta, stream, est


def run(config: RunConfig, out_path=None) -> RunResult:
    """Online training: stream -> estimator step -> optimizer update -> metrics.

    Stops at the horizon or at the first divergence (non-finite values, or an
    instantaneous loss above ``divergence_factor`` times the first loss).
    Text-task losses are reported in bits per character.
    """
    cfg = config.resolved()
    model, theta, stream, est = _setup(cfg)
    optimizer = make_optimizer(cfg.optimizer["name"], model.param_dim)
    schedule = make_schedule(cfg.optimizer)
    unit = 1.0 / LN2 if cfg.is_text else 1.0

    partials = []  # exact running sum via math.fsum on a short list of partials
    trail = deque(maxlen=cfg.window)
    rows = []
    first_loss = None
    diverged, div_step, reason = False, None, ""

    for t in range(1, cfg.horizon + 1):
        x, target = next(stream)
        lr = schedule(t - 1)
        res = est.step(x, target, theta)
        ell = res.loss * unit
        if first_loss is None:
            first_loss = ell
        if not (math.isfinite(ell) and np.all(np.isfinite(res.state)) and np.all(np.isfinite(res.grad))):
            diverged, reason = True, "non-finite value"
        elif ell > cfg.divergence_factor * first_loss:
            diverged, reason = True, f"loss exceeded {cfg.divergence_factor:g} x initial"
        if res.ready and not diverged:
            theta = optimizer.update(res.grad, lr, theta)
            if not np.all(np.isfinite(theta)):
                diverged, reason = True, "non-finite parameters"
        _add(partials, ell)
        trail.append(ell)
        if diverged or t % cfg.log_every == 0 or t == cfg.horizon:
            rows.append({
                "step": t,
                "inst_loss": ell,
                "cum_avg": math.fsum(partials) / t,
                "trail_avg": math.fsum(trail) / len(trail),
                "lr": lr,
                "diverged": int(diverged),
            })
        if diverged:
            div_step = t
            log.info("%s diverged at step %d: %s", cfg.name, t, reason)
            break

    result = RunResult(cfg, rows, diverged, div_step, reason, theta)
    if out_path is not None:
        result.path = write_metrics(result, out_path)
    return result


def _add(partials, x):
    """Shewchuk's exact running sum (same scheme as ``math.fsum``)."""
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_metrics(result: RunResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# uoro {__version__}\n")
        fh.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
        fh.write(f"# loss_unit: {'bits/char' if cfg.is_text else 'raw'}\n")
        fh.write(f"# status: {'diverged' if result.diverged else 'completed'}")
        if result.diverged:
            fh.write(f" step={result.divergence_step} reason={result.reason}")
        fh.write("\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in result.rows:
            w.writerow([_fmt(row[c]) for c in COLUMNS])
    return path


def read_metrics(path):
    """Return ``(metadata, rows)``; metadata holds the parsed config and status."""
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                meta[key] = json.loads(value) if key == "config" else value
            else:
                lines.append(line)
    rows = []
    for rec in csv.DictReader(lines):
        rows.append({k: (int(v) if k in ("step", "diverged") else float(v)) for k, v in rec.items()})
    return meta, rows


# ---------------------------------------------------------------------- sweeps

def _run_one(args):
    cfg, out_dir = args
    entry = {"name": cfg.name, "task": cfg.task.get("name"), "algorithm": cfg.algorithm.get("name"),
             "lr": cfg.optimizer.get("eta", cfg.optimizer.get("gamma"))}
    try:
        cfg = cfg.resolved()
        entry.update(name=cfg.name, algorithm=default_name(cfg).split("_lr")[0])
        path = None if out_dir is None else Path(out_dir) / f"{cfg.name}.csv"
        res = run(cfg, path)
    except Exception as exc:  # one bad run must not abort the sweep
        entry.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return entry
    final = res.final
    entry.update(status="diverged" if res.diverged else "completed",
                 divergence_step=res.divergence_step, steps=final.get("step"),
                 final_loss=final.get("inst_loss"), trail_avg=final.get("trail_avg"),
                 cum_avg=final.get("cum_avg"), error="")
    return entry


SUMMARY_COLUMNS = ("name", "task", "algorithm", "lr", "status", "divergence_step", "steps",
                   "final_loss", "trail_avg", "cum_avg", "error")


def sweep(configs, out_dir=None, workers: int = 1):
    """Run every config (in parallel when ``workers > 1``); one summary entry per run."""
    jobs = [(c, out_dir) for c in configs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            summary = list(pool.map(_run_one, jobs))
    else:
        summary = [_run_one(j) for j in jobs]
    if out_dir is not None:
        write_summary(summary, Path(out_dir) / "summary.csv")
    return summary


def write_summary(summary, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for entry in summary:
            w.writerow({k: ("" if entry.get(k) is None else _fmt(entry.get(k))) for k in SUMMARY_COLUMNS})
    return path


def best_per_algorithm(summary):
    """Completed run with the lowest final trailing loss, per algorithm."""
    best = {}
    for e in summary:
        if e["status"] != "completed" or not math.isfinite(e["trail_avg"]):
            continue
        cur = best.get(e["algorithm"])
        if cur is None or e["trail_avg"] < cur["trail_avg"]:
            best[e["algorithm"]] = e
    return best


def lr_grid(base: RunConfig, values, key="eta"):
    """Copies of ``base`` with the optimizer's ``key`` set to each value."""
    out = []
    for v in values:
        cfg = copy.deepcopy(base)
        cfg.optimizer = {**cfg.optimizer, key: float(v)}
        cfg.name = None
        out.append(cfg)
    return out


# ----------------------------------------------------------------------- plots

def plot(paths, out_path, column=None):
    """Line chart of one metric column from several metric files.

    Influence balancing: instantaneous loss, log-log. Text tasks: cumulative
    bits per character against a log step axis.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    text = None
    for p in paths:
        meta, rows = read_metrics(p)
        cfg = meta.get("config", {})
        is_text = cfg.get("task", {}).get("name") != "influence_balancing"
        text = is_text if text is None else text
        col = column or ("cum_avg" if is_text else "inst_loss")
        steps = [r["step"] for r in rows]
        ax.plot(steps, [r[col] for r in rows], label=cfg.get("name") or Path(p).stem)
        if not is_text:
            ax.set_yscale("log")
    ax.set_xscale("log")
    ax.set_xlabel("characters" if text else "step")
    ax.set_ylabel(column or ("bits per character" if text else "loss"))
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
