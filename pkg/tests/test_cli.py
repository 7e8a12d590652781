import json
import math
import os
import re

import numpy as np
import pytest

from roughwave.cli import (
    EXPERIMENTS, ConfigError, format_listing, list_experiments, load_config, main, parse_config_text, run,
)
from roughwave.field import read_snapshot


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_grammar():
    raw = parse_config_text("# header\nexperiment = scan_k   # trailing\n\nT = 2*pi*64\nk_interval = 0.3, 0.8\n")
    assert raw == {"experiment": "scan_k", "T": "2*pi*64", "k_interval": "0.3, 0.8"}
    exp, params, seed = load_config(raw)
    assert params["T"] == pytest.approx(2 * math.pi * 64)
    assert params["k_interval"] == [0.3, 0.8]
    assert params["M"] is None and seed == 0


@pytest.mark.parametrize("text", [
    "experiment = sim\nT 16\n",
    "experiment = sim\nT =\n",
    "experiment = sim\nT = 16\nT = 32\n",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("raw", [
    {"T": "16"},
    {"experiment": "nope"},
    {"experiment": "sim"},
    {"experiment": "sim", "T": "16", "colour": "red"},
    {"experiment": "sim", "T": "-1"},
    {"experiment": "sim", "T": "abc"},
    {"experiment": "sim", "T": "16", "potential": "wobbly"},
    {"experiment": "census", "kappa": "8.5"},
    {"experiment": "scan_k", "k_interval": "0.8, 0.3"},
])
def test_config_rejected(raw):
    with pytest.raises(ConfigError):
        load_config(raw)


def test_listing_is_descriptive():
    rows = list_experiments()
    assert {r["name"] for r in rows} == set(EXPERIMENTS)
    text = format_listing()
    # anchors describe behaviour, not document locations
    assert not re.search(r"\b(Eq|Lemma|Theorem|Corollary|Section)\b|§", text)
    assert next(r for r in rows if r["name"] == "sim")["required"] == ["T"]


def test_main_list(capsys):
    assert main(["--list"]) == 0
    assert "frame_check" in capsys.readouterr().out


def test_main_requires_config(capsys):
    assert main([]) == 2


def test_frame_check_run(tmp_path):
    cfg = write(tmp_path, "experiment = frame_check\ntrials = 3\nk = 3.7\n")
    out = tmp_path / "out"
    record = run(cfg, str(out))
    s = record["summary"]
    assert s["frame_identity_rel_error"] < 1e-8 and s["reconstruction_rel_error"] < 1e-8
    files = sorted(os.listdir(out))
    assert files == ["coefficients.csv", "frame.csv", "run_record.json"]
    on_disk = json.loads((out / "run_record.json").read_text())
    assert on_disk["config"]["k"] == 3.7 and set(on_disk["versions"]) >= {"numpy", "scipy", "roughwave"}
    assert {a["path"] for a in on_disk["artifacts"]} == {"frame.csv", "coefficients.csv"}


def test_runs_are_deterministic(tmp_path):
    cfg = write(tmp_path, "experiment = frame_check\ntrials = 2\nseed = 7\n")
    run(cfg, str(tmp_path / "a"))
    run(cfg, str(tmp_path / "b"))
    assert (tmp_path / "a" / "frame.csv").read_bytes() == (tmp_path / "b" / "frame.csv").read_bytes()
    run(cfg, str(tmp_path / "c"), seed=8)
    assert (tmp_path / "a" / "frame.csv").read_bytes() != (tmp_path / "c" / "frame.csv").read_bytes()


def test_sim_zero_potential(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = sim\nT = 16\nt_end = 20\nn_out = 4\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
    line = json.loads(capsys.readouterr().out)
    assert line["status"] == "ok"
    final = read_snapshot(tmp_path / "o" / "final.rwav")
    assert final.time_tag == 20 and final.grid.T == 16
    rows = (tmp_path / "o" / "deviation.csv").read_text().splitlines()
    assert rows[0] == "t,deviation,norm,energy" and len(rows) == 1 + 5
    dev = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert dev.max() < 1e-12


def test_bad_config_writes_nothing(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = scan_k\nfoo = 1\n")
    out = tmp_path / "never"
    assert main(["--config", cfg, "--out", str(out)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["kind"] == "config" and "foo" in err["message"]
    assert not out.exists()


def test_stability_guard_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = sim\nT = 16\npotential = cosine\ngamma = 0\ndt = 5\n")
    out = tmp_path / "o"
    assert main(["--config", cfg, "--out", str(out)]) == 3
    assert json.loads(capsys.readouterr().err)["kind"] == "numerical"
    assert not out.exists() or not [f for f in os.listdir(out) if not f.startswith(".")]


def test_budget_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ROUGHWAVE_BUDGET", "10")
    cfg = write(tmp_path, "experiment = census\nkappa = 8\n")
    out = tmp_path / "o"
    assert main(["--config", cfg, "--out", str(out)]) == 4
    assert json.loads(capsys.readouterr().err)["kind"] == "budget"
    assert not out.exists() or os.listdir(out) == []


def test_module_range_errors_are_config(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = resonance_demo\nT = 100\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_census_and_no_lattice_runs(tmp_path):
    rec = run(write(tmp_path, "experiment = census\nkappa = 8\nsamples = 40\n"), str(tmp_path / "c"))
    assert rec["summary"]["fitted_C"] > 0
    assert (tmp_path / "c" / "census.csv").read_text().startswith("s,count,s0,kappa")
    rec = run(write(tmp_path, "experiment = no_lattice\nkappa = 8\n", "nl.cfg"), str(tmp_path / "n"))
    assert rec["summary"]["N"] == 3


def test_demo_runs(tmp_path):
    rec = run(write(tmp_path, "experiment = resonance_demo\nT = 2*pi*25\n"), str(tmp_path / "d"))
    demo = json.loads((tmp_path / "d" / "demo.json").read_text())
    assert demo["eigen_error"] < 1e-14 and rec["summary"]["max_gap"] < 0.2
    rec = run(write(tmp_path, "experiment = trap_demo\nT = 64\n", "t.cfg"), str(tmp_path / "t"))
    assert rec["summary"]["bound_state"]


def test_scan_runs(tmp_path):
    rec = run(write(tmp_path, "experiment = scan_k\nT = 2*pi*8\nn_k = 9\n"), str(tmp_path / "s"))
    rows = (tmp_path / "s" / "scan.csv").read_text().splitlines()
    assert len(rows) == 10 and rec["summary"]["peak_k"] in [float(r.split(",")[0]) for r in rows[1:]]
