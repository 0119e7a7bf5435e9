import json
import math

import numpy as np
import pytest

from uoro import cli
from uoro.harness import (
    ConfigError, RunConfig, best_per_algorithm, load_config, lr_grid, plot, read_metrics, run, sweep,
)
from uoro.losses import CrossEntropyLoss, nats_to_bits


def influence_cfg(**kw):
    base = dict(task={"name": "influence_balancing", "n": 23, "p": 10},
                algorithm={"name": "uoro"}, optimizer={"name": "sgd", "eta": 1e-3}, horizon=300)
    base.update(kw)
    return RunConfig(**base)


def text_cfg(**kw):
    base = dict(task={"name": "anbn", "k": 1, "l": 4}, model={"cell": "gru", "hidden": 4},
                algorithm={"name": "uoro"}, optimizer={"name": "adam", "gamma": 1e-3, "alpha": 0.03},
                horizon=250, log_every=50, window=100)
    base.update(kw)
    return RunConfig(**base)


@pytest.mark.parametrize("make", [influence_cfg, text_cfg])
def test_rerun_gives_identical_csv(tmp_path, make):
    a = run(make(), tmp_path / "a.csv").path.read_bytes()
    b = run(make(), tmp_path / "b.csv").path.read_bytes()
    assert a == b


def test_seeds_change_output(tmp_path):
    a = run(text_cfg(), tmp_path / "a.csv").path.read_bytes()
    b = run(text_cfg(seed_signs=1), tmp_path / "b.csv").path.read_bytes()
    assert a != b


def test_metric_file_layout(tmp_path):
    res = run(text_cfg(), tmp_path / "m.csv")
    meta, rows = read_metrics(res.path)
    assert meta["config"]["task"] == {"name": "anbn", "k": 1, "l": 4}
    assert meta["loss_unit"] == "bits/char" and meta["status"] == "completed"
    assert [r["step"] for r in rows] == [50, 100, 150, 200, 250]
    assert set(rows[0]) == {"step", "inst_loss", "cum_avg", "trail_avg", "lr", "diverged"}
    assert rows[-1]["lr"] == pytest.approx(1e-3 / (1 + 0.03 * math.sqrt(249)))


def test_cumulative_and_trailing_averages_exact(tmp_path):
    res = run(influence_cfg(horizon=40, window=7))
    losses = [r["inst_loss"] for r in res.rows]
    for t, row in enumerate(res.rows, start=1):
        assert row["cum_avg"] == math.fsum(losses[:t]) / t
        tail = losses[max(0, t - 7):t]
        assert row["trail_avg"] == math.fsum(tail) / len(tail)


def test_bits_conversion_uniform_two_symbols():
    nats = CrossEntropyLoss().value(np.zeros(2), 1)
    assert nats == pytest.approx(math.log(2))
    assert nats_to_bits(nats) == pytest.approx(1.0, abs=1e-15)


def test_divergence_is_recorded(tmp_path):
    res = run(influence_cfg(optimizer={"name": "sgd", "eta": 1.0}, horizon=5000), tmp_path / "d.csv")
    assert res.diverged and res.exit_code == 2
    assert res.rows[-1]["diverged"] == 1 and res.rows[-1]["step"] == res.divergence_step
    meta, _ = read_metrics(res.path)
    assert meta["status"].startswith("diverged")


def test_ready_flag_defers_updates():
    # chunked truncation holds parameters fixed inside each window
    res = run(influence_cfg(algorithm={"name": "tbptt", "T": 5, "mode": "chunked"}, horizon=3))
    assert not res.diverged and res.theta.shape == (1,)


@pytest.mark.parametrize("bad", [
    dict(horizon=0),
    dict(task={"name": "parity"}),
    dict(algorithm={"name": "tbptt"}),
    dict(algorithm={"name": "rank_k_uoro", "r": 0}),
    dict(optimizer={"name": "rmsprop", "eta": 1.0}),
    dict(optimizer={"name": "sgd"}),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        run(influence_cfg(**bad))


def test_config_roundtrip_and_unknown_keys(tmp_path):
    cfg = text_cfg()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"horizon": 3, "epochs": 2})


def test_sweep_empty():
    assert sweep([]) == []


def test_sweep_reproducible_and_best(tmp_path):
    cfgs = lr_grid(influence_cfg(horizon=200), [1e-4, 1e-3, 1.0])
    s1 = sweep(cfgs, tmp_path / "a")
    s2 = sweep(cfgs, tmp_path / "b")
    assert s1 == s2
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    assert [e["status"] for e in s1] == ["completed", "completed", "diverged"]
    best = best_per_algorithm(s1)
    assert list(best) == ["influence_balancing_uoro"]
    assert best["influence_balancing_uoro"]["lr"] in (1e-4, 1e-3)


def test_sweep_parallel_matches_serial():
    cfgs = lr_grid(influence_cfg(horizon=100), [1e-4, 1e-3])
    assert sweep(cfgs, workers=2) == sweep(cfgs, workers=1)


def test_sweep_keeps_going_after_error():
    bad = influence_cfg(horizon=0)
    out = sweep([bad, influence_cfg(horizon=20)])
    assert out[0]["status"] == "error" and "horizon" in out[0]["error"]
    assert out[1]["status"] == "completed"


def test_cli_run_and_exit_codes(tmp_path, capsys):
    ok = cli.main(["run", "--task", "influence_balancing", "--algorithm", "uoro", "--eta", "1e-3",
                   "--horizon", "50", "-o", str(tmp_path / "ok.csv")])
    assert ok == 0 and (tmp_path / "ok.csv").exists()
    div = cli.main(["run", "--task", "influence_balancing", "--algorithm", "rtrl", "--eta", "1.0",
                    "--horizon", "5000", "-o", str(tmp_path / "div.csv")])
    assert div == 2
    err = cli.main(["run", "--task", "influence_balancing", "--algorithm", "tbptt", "--eta", "1e-3",
                    "-o", str(tmp_path / "err.csv")])
    assert err == 1
    assert "error" in capsys.readouterr().err


def test_cli_config_file_with_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(text_cfg().to_dict()))
    out = tmp_path / "r.csv"
    assert cli.main(["run", "--config", str(path), "--horizon", "100", "-o", str(out)]) == 0
    meta, rows = read_metrics(out)
    assert meta["config"]["horizon"] == 100 and rows[-1]["step"] == 100


def test_cli_sweep_and_plot(tmp_path, capsys):
    code = cli.main(["sweep", "--task", "influence_balancing", "--algorithm", "tbptt", "-T", "3",
                     "--horizon", "60", "--eta", "1e-3", "--lrs", "1e-4", "1e-3", "-o", str(tmp_path)])
    assert code == 0
    assert "best influence_balancing_tbptt3" in capsys.readouterr().out
    csvs = sorted(str(p) for p in tmp_path.glob("influence*.csv"))
    assert len(csvs) == 2
    png = tmp_path / "fig.png"
    assert cli.main(["plot", *csvs, "-o", str(png)]) == 0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_text_runs(tmp_path):
    path = run(text_cfg(), tmp_path / "t.csv").path
    out = plot([path], tmp_path / "t.png", column="trail_avg")
    assert out.stat().st_size > 0


def test_cli_gen(tmp_path, capsys):
    assert cli.main(["gen", "--task", "anbn", "--task-param", "k=1", "--task-param", "l=1", "--records", "2"]) == 0
    assert capsys.readouterr().out == "a\nb\na\nb\n"
    out = tmp_path / "b.txt"
    assert cli.main(["gen", "--task", "distant_brackets", "--records", "3", "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3
