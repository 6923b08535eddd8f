import json
import subprocess
import sys

import numpy as np
import pytest

from hodmd import cli
from hodmd.dmd import load_model, save_model, fit
from hodmd.metrics import l2_relative
from hodmd.snapshots import SnapshotSet, load_csv, make_embedded_pair, recommend_depth, save_csv


def run(*args):
    return cli.run([str(a) for a in args])


@pytest.fixture(scope="module")
def line_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("line")
    path = d / "line.csv"
    assert run("simulate", "--preset", "linear-line", "--out", path) == 0
    return path


@pytest.fixture
def tones_csv(tmp_path):
    t = np.arange(500.0)
    y = np.vstack([np.cos(0.3 * t) + 0.5 * np.cos(1.1 * t + 0.4),
                   0.7 * np.cos(0.3 * t + 1.0) - 0.2 * np.cos(1.1 * t)])
    path = tmp_path / "tones.csv"
    save_csv(SnapshotSet(("a", "b"), 1.0, y), path)
    return path


def test_simulate_row_count(tmp_path):
    out = tmp_path / "line.csv"
    assert run("simulate", "--preset", "linear-line", "--sections", 1000,
               "--dt", 5e-9, "--steps", 4000, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time,n1000"
    assert len(lines) == 4001 + 1
    report = json.loads((tmp_path / "line.csv.report.json").read_text())
    assert report["config"]["sections"] == 1000 and report["config"]["dt"] == 5e-9


def test_simulate_nltl_uses_newton(tmp_path):
    out = tmp_path / "nltl.csv"
    assert run("simulate", "--preset", "nltl", "--sections", 100, "--steps", 2000,
               "--out", out) == 0
    report = json.loads((tmp_path / "nltl.csv.report.json").read_text())
    assert 1 <= report["metrics"]["newton_max_iter"] <= 20
    assert load_csv(out).q == 2000


def test_simulate_invalid_preset(tmp_path, capsys):
    assert run("simulate", "--preset", "nope", "--out", tmp_path / "x.csv") == 2
    assert "invalid choice" in capsys.readouterr().err


def test_simulate_from_netlist_file(tmp_path):
    from hodmd.circuit import preset, save_netlist
    save_netlist(preset("linear-line", 5), tmp_path / "n.json")
    assert run("simulate", "--netlist", tmp_path / "n.json", "--dt", 1e-11, "--steps", 20,
               "--out", tmp_path / "o.csv") == 0
    assert load_csv(tmp_path / "o.csv").q == 20
    assert run("simulate", "--netlist", tmp_path / "n.json", "--out", tmp_path / "p.csv") == 2


def test_fit_explicit_rank_and_depth(line_csv, tmp_path):
    out = tmp_path / "m.json"
    assert run("fit", "--in", line_csv, "--train-frac", 0.1, "--rank", 9,
               "--depth", 60, "--out", out) == 0
    m = load_model(out)
    assert m.r == 9 and m.s == 60
    cfg = json.loads(out.read_text())["config"]
    assert cfg["train_steps"] == 400 and cfg["rank"] == "9"


def test_fit_auto_rank_uses_energy_rule(line_csv, tmp_path):
    out = tmp_path / "m.json"
    assert run("fit", "--in", line_csv, "--train-frac", 0.1, "--rank", "auto",
               "--depth", 60, "--out", out) == 0
    sel = json.loads(out.read_text())["rank_selection"]
    assert sel["threshold"] == 0.999 and sel["energy_ratio"] >= 0.999


def test_fit_auto_depth(tones_csv, tmp_path):
    out = tmp_path / "m.json"
    assert run("fit", "--in", tones_csv, "--train-steps", 100, "--depth", "auto",
               "--out", out) == 0
    assert load_model(out).s == recommend_depth(2, 100)


def test_predict_reconstructs_training_window(tones_csv, tmp_path):
    model, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert run("fit", "--in", tones_csv, "--train-steps", 100, "--rank", 4,
               "--depth", 10, "--out", model) == 0
    assert run("predict", "--model", model, "--like", tones_csv, "--out", pred) == 0
    ref, got = load_csv(tones_csv), load_csv(pred)
    assert l2_relative(ref.samples[:, :101], got.samples[:, :101]) <= 1e-8
    assert l2_relative(ref.samples, got.samples) <= 1e-8


def test_predict_extrapolates_line(line_csv, tmp_path):
    model, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert run("fit", "--in", line_csv, "--train-frac", 0.1, "--depth", 60, "--out", model) == 0
    assert run("predict", "--model", model, "--steps", 4000, "--out", pred) == 0
    got = load_csv(pred)
    assert got.q == 4000
    assert l2_relative(load_csv(line_csv).samples, got.samples) <= 0.01


def test_predict_empty_range(tones_csv, tmp_path):
    model = tmp_path / "m.json"
    assert run("fit", "--in", tones_csv, "--train-steps", 100, "--out", model) == 0
    assert run("predict", "--model", model, "--steps", 0, "--out", tmp_path / "p.csv") == 2
    assert run("predict", "--model", model, "--out", tmp_path / "p.csv") == 2


def test_predict_growth_overflow_exit_code(tmp_path, capsys):
    s = SnapshotSet(("y",), 1.0, (2.0 ** np.arange(10.0))[None, :])
    save_model(fit(make_embedded_pair(s, 2), 1), tmp_path / "g.json")
    assert run("predict", "--model", tmp_path / "g.json", "--steps", 5000,
               "--out", tmp_path / "p.csv") == 3
    assert "mode 0" in capsys.readouterr().err


def test_fit_numerical_failure_exit_code(tmp_path):
    y = np.vstack([0.5 ** np.arange(20), np.zeros(20)])
    save_csv(SnapshotSet(("a", "b"), 1.0, y), tmp_path / "z.csv")
    assert run("fit", "--in", tmp_path / "z.csv", "--train-steps", 10, "--depth", 1,
               "--rank", 2, "--out", tmp_path / "m.json") == 3


def test_eval_identical(tones_csv, capsys):
    assert run("eval", "--ref", tones_csv, "--cand", tones_csv) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["full"]["l2_relative"] == 0.0


def test_eval_windows_and_report(tones_csv, tmp_path, capsys):
    assert run("eval", "--ref", tones_csv, "--cand", tones_csv, "--train-steps", 100,
               "--out", tmp_path / "e.json") == 0
    rep = json.loads((tmp_path / "e.json").read_text())
    assert set(rep["metrics"]) == {"full", "train", "extrapolation"}
    assert rep["metrics"]["train"]["n_samples"] == 101


def test_eval_mismatched_lengths(tones_csv, tmp_path):
    s = load_csv(tones_csv)
    save_csv(s.window(0, 300), tmp_path / "short.csv")
    assert run("eval", "--ref", tones_csv, "--cand", tmp_path / "short.csv") == 2


def test_eval_missing_file(tmp_path):
    assert run("eval", "--ref", tmp_path / "a.csv", "--cand", tmp_path / "b.csv") == 2


def read_rows(path):
    lines = path.read_text().splitlines()
    return [dict(zip(lines[0].split(","), ln.split(","))) for ln in lines[1:]]


def test_sweep_rank_trend(line_csv, tmp_path):
    out = tmp_path / "s.csv"
    assert run("sweep", "--in", line_csv, "--train-frac", 0.1, "--ranks", "3,5,7,9,12",
               "--depths", 60, "--out", out) == 0
    rows = read_rows(out)
    assert [r["r"] for r in rows] == ["3", "5", "7", "9", "12"]
    ext = [float(r["l2_extrap"]) for r in rows]
    assert ext[-1] < ext[0]


def test_sweep_order_independent_of_workers(tones_csv, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--in", tones_csv, "--train-steps", 100, "--ranks", "4,2,auto",
            "--depths", "10,5"]
    assert run(*args, "--out", a) == 0
    assert run(*args, "--workers", 2, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert [(r["s"], r["r"]) for r in read_rows(a)] == [
        ("10", "4"), ("10", "2"), ("10", "auto"), ("5", "4"), ("5", "2"), ("5", "auto")]


def test_sweep_empty_grid(tones_csv, tmp_path):
    assert run("sweep", "--in", tones_csv, "--ranks", "", "--out", tmp_path / "s.csv") == 2


def test_config_file_and_flag_override(tones_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"in": str(tones_csv), "train-steps": 100, "rank": 2,
                               "depth": 10}))
    out = tmp_path / "m.json"
    assert run("fit", "--config", cfg, "--out", out) == 0
    assert load_model(out).r == 2
    assert run("fit", "--config", cfg, "--rank", 4, "--out", out) == 0
    m = json.loads(out.read_text())
    assert m["r"] == 4 and m["config"]["depth"] == 10


def test_config_unknown_key(tones_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"in": str(tones_csv), "flux": 1}))
    assert run("fit", "--config", cfg, "--out", tmp_path / "m.json") == 2


def test_missing_required_option(tmp_path):
    assert run("fit", "--out", tmp_path / "m.json") == 2


def test_thread_env(tones_csv, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    assert run("fit", "--in", tones_csv, "--train-steps", 100, "--out", tmp_path / "m.json") == 0
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert run("fit", "--in", tones_csv, "--train-steps", 100, "--out", tmp_path / "m.json") == 2


def test_pipeline_is_byte_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        assert run("simulate", "--preset", "linear-line", "--sections", 40, "--dt", 2e-10,
                   "--steps", 600, "--out", d / "w.csv") == 0
        assert run("fit", "--in", d / "w.csv", "--depth", 30, "--out", d / "m.json") == 0
        assert run("predict", "--model", d / "m.json", "--steps", 600, "--out", d / "p.csv") == 0
        outs.append([(d / n).read_bytes() for n in ("w.csv", "m.json", "p.csv")])
    assert outs[0][1].replace(b"/0/", b"/1/") == outs[1][1]
    assert outs[0][0] == outs[1][0] and outs[0][2] == outs[1][2]


def test_reproduce_cliff(tmp_path, capsys):
    assert run("reproduce", "cliff", "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "cliff.report.json").read_text())
    sweep = {row["s"]: row["l2_full"] for row in rep["metrics"]["depth_sweep"]}
    assert sweep[500] < sweep[400] / 20


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hodmd.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "hodmd" in proc.stdout
