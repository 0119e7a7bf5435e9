"""Command line: ``uoro run | sweep | plot | gen``.

Exit status: 0 completed, 2 diverged (any run, for sweeps), 1 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import ConfigError, RunConfig, best_per_algorithm, load_config, lr_grid, plot, run, sweep
from .tasks import make_task


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.task:
        cfg.task = {"name": args.task}
    for kv in args.task_param or []:
        key, _, value = kv.partition("=")
        cfg.task[key] = int(value)
    if args.cell:
        cfg.model = {**cfg.model, "cell": args.cell}
    if args.hidden:
        cfg.model = {**cfg.model, "hidden": args.hidden}
    if args.algorithm:
        cfg.algorithm = {"name": args.algorithm}
    if args.T is not None:
        cfg.algorithm["T"] = args.T
    if args.r is not None:
        cfg.algorithm["r"] = args.r
    if args.tbptt_mode:
        cfg.algorithm["mode"] = args.tbptt_mode
    if args.optimizer:
        cfg.optimizer = {"name": args.optimizer}
    for key in ("eta", "gamma", "alpha"):
        if getattr(args, key) is not None:
            cfg.optimizer[key] = getattr(args, key)
    for key in ("seed_data", "seed_signs", "seed_init", "horizon", "log_every", "window", "name"):
        if getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    return cfg


def _add_run_flags(p):
    p.add_argument("--config", help="JSON run configuration; flags override its fields")
    p.add_argument("--task", choices=["influence_balancing", "distant_brackets", "anbn"])
    p.add_argument("--task-param", action="append", metavar="KEY=INT",
                   help="task parameter, e.g. n=23 p=10, s=1 k=5 a=10, k=1 l=32")
    p.add_argument("--cell", choices=["gru", "lstm", "rnn"])
    p.add_argument("--hidden", type=int)
    p.add_argument("--algorithm", choices=["uoro", "rtrl", "tbptt", "memory_t_uoro", "rank_k_uoro"])
    p.add_argument("-T", type=int, help="truncation / memory length")
    p.add_argument("-r", type=int, help="rank for rank_k_uoro")
    p.add_argument("--tbptt-mode", choices=["sliding", "chunked"])
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--eta", type=float, help="schedule eta/(1+sqrt(t))")
    p.add_argument("--gamma", type=float, help="schedule gamma/(1+alpha*sqrt(t))")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed-data", type=int)
    p.add_argument("--seed-signs", type=int)
    p.add_argument("--seed-init", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--window", type=int, help="trailing-average window W")
    p.add_argument("--name")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="uoro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one online training run")
    _add_run_flags(p_run)
    p_run.add_argument("-o", "--out", required=True, help="metrics CSV path")

    p_sweep = sub.add_parser("sweep", help="learning-rate sweep or a list of configs")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--configs", nargs="*", default=[], help="JSON configs to run as-is")
    p_sweep.add_argument("--lrs", type=float, nargs="*", default=[],
                         help="sweep eta (or gamma) of the flag-built config over these values")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("-o", "--out-dir", required=True)

    p_plot = sub.add_parser("plot", help="render metric CSVs to an image")
    p_plot.add_argument("csv", nargs="+")
    p_plot.add_argument("-o", "--out", required=True)
    p_plot.add_argument("--column", choices=["inst_loss", "cum_avg", "trail_avg", "lr"])

    p_gen = sub.add_parser("gen", help="dump task text samples")
    p_gen.add_argument("--task", required=True, choices=["distant_brackets", "anbn"])
    p_gen.add_argument("--task-param", action="append", metavar="KEY=INT")
    p_gen.add_argument("--seed-data", type=int, default=0)
    p_gen.add_argument("--records", type=int, default=10)
    p_gen.add_argument("-o", "--out", help="file to write; stdout if omitted")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            res = run(_config_from_args(args), args.out)
            final = res.final
            print(f"{res.config.name}: {'diverged at step ' + str(res.divergence_step) if res.diverged else 'completed'}; "
                  f"trail_avg={final.get('trail_avg')!r} -> {res.path}")
            return res.exit_code
        if args.command == "sweep":
            configs = [load_config(c) for c in args.configs]
            if args.lrs:
                base = _config_from_args(args)
                key = "gamma" if "gamma" in base.optimizer else "eta"
                configs += lr_grid(base, args.lrs, key)
            summary = sweep(configs, args.out_dir, args.workers)
            for e in summary:
                print(f"{e['name']}: {e['status']} trail_avg={e.get('trail_avg')!r} {e.get('error', '')}")
            for algo, e in best_per_algorithm(summary).items():
                print(f"best {algo}: lr={e['lr']!r} trail_avg={e['trail_avg']!r}")
            if any(e["status"] == "error" for e in summary):
                return 1
            return 2 if any(e["status"] == "diverged" for e in summary) else 0
        if args.command == "plot":
            print(plot(args.csv, args.out, args.column))
            return 0
        if args.command == "gen":
            spec = {"name": args.task}
            for kv in args.task_param or []:
                key, _, value = kv.partition("=")
                spec[key] = int(value)
            stream = make_task(spec, args.seed_data)
            if args.out:
                stream.write(args.out, args.records)
            else:
                for i, rec in enumerate(stream.records()):
                    if i >= args.records:
                        break
                    sys.stdout.write(rec)
            return 0
    except (ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
