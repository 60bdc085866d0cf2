import json
import time

import numpy as np
import pytest

from sns.cli import main
from sns.config import load_config
from sns.io import read_csv

SMALL = """
[grid]
n = 32
[noise]
phi_kind = band
phi_low = 0.5
phi_high = 0.05
alpha0 = 0.05
[time]
h = 1e-3
t_end = 0.01
[run]
ensemble = 2
lam0 = 1.0
rough_fraction = 0.5
checkpoint_every = 5
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def first_line(path):
    with open(path) as fh:
        return fh.readline().strip()


def test_help_and_usage_errors(tmp_path, cfg, capsys):
    assert main(["--help"]) == 0
    assert main([]) == 2
    assert main(["explode", "--config", str(cfg)]) == 2
    assert main(["simulate"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("n = 31\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--config", str(cfg), "--threads", "0"]) == 2
    assert "error" in capsys.readouterr().err


def test_simulate_smoke_and_hash(tmp_path, cfg):
    out = tmp_path / "out"
    t0 = time.time()
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert time.time() - t0 < 10.0
    h = load_config(cfg, seed=5).config_hash()
    assert first_line(out / "report.csv") == f"# config_hash={h}"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config_hash"] == h
    assert summary["provenance"]["seed"] == 5
    assert summary["status"] == "completed"
    rows = read_csv(out / "report.csv")
    assert len(rows) == 2 * 11
    assert sorted((out / "checkpoints").iterdir())[0].name == "checkpoint_00000005.snsc"


def test_replay_is_deterministic(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    assert (a / "report.csv").read_text() == (b / "report.csv").read_text()


def test_resume_and_corrupted_checkpoint(tmp_path, cfg, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    ck = out / "checkpoints" / "checkpoint_00000005.snsc"
    res = tmp_path / "res"
    assert main(["simulate", "--config", str(cfg), "--out", str(res), "--resume", str(ck)]) == 0
    full = read_csv(out / "report.csv")
    resumed = read_csv(res / "report.csv")
    assert resumed[-1] == full[-1]
    buf = bytearray(ck.read_bytes())
    buf[len(buf) // 2] ^= 0x55
    ck.write_bytes(bytes(buf))
    capsys.readouterr()
    assert main(["simulate", "--config", str(cfg), "--out", str(res), "--resume", str(ck)]) == 2
    err = capsys.readouterr().err
    assert "checksum" in err and "Traceback" not in err


def test_blow_up_exit_code(tmp_path):
    p = tmp_path / "blow.ini"
    p.write_text("n = 16\nh = 0.5\nt_end = 100\nlam0 = 100\nensemble = 1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_verify_single_suite(tmp_path, cfg, capsys):
    out = tmp_path / "v"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--suite", "heatflow"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["verify.json", "verify_heatflow.csv"]
    assert "heatflow" in capsys.readouterr().out
    rows = read_csv(out / "verify_heatflow.csv")
    assert list(rows[0]) == ["lemma", "j", "p", "N", "t", "estimate", "slope", "pass"]
    data = json.loads((out / "verify.json").read_text())
    assert data["verdicts"] == {"heatflow": True}
    assert data["config_hash"] == load_config(cfg).config_hash()


def test_verify_failure_and_unknown_suite(tmp_path, cfg):
    # the quick Wick sweep is non-monotone (see the decisions ledger), so it fails
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "w"), "--suite", "wick"]) == 1
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "u"), "--suite", "nope"]) == 2


def test_invariant_resume(tmp_path):
    p = tmp_path / "inv.ini"
    p.write_text("n = 8\ndealias = none\nphi_low = 1.0\nalpha0 = 1.0\nsplit_radius = 0\n"
                 "h = 0.01\nt_end = 1.0\nburn_in = 0.2\nensemble = 2\nsample_every = 2\n")
    out = tmp_path / "inv"
    code = main(["invariant", "--config", str(p), "--out", str(out)])
    assert code in (0, 1)
    state = out / "invariant_state.npz"
    with np.load(state) as z:
        first = len(z["batch_sums"])
    code = main(["invariant", "--config", str(p), "--out", str(out), "--resume", str(state)])
    assert code in (0, 1)
    with np.load(state) as z:
        assert len(z["batch_sums"]) == 2 * first
    rows = read_csv(out / "invariant.csv")
    assert {"k1", "k2", "estimate", "stderr", "theory", "z"} == set(rows[0])
    bogus = tmp_path / "bogus.npz"
    bogus.write_bytes(b"not a zip")
    assert main(["invariant", "--config", str(p), "--out", str(out), "--resume", str(bogus)]) == 2


@pytest.mark.parametrize("command", ["decay", "mixing"])
def test_decay_and_mixing_small(tmp_path, command):
    p = tmp_path / "c.ini"
    p.write_text("n = 16\nphi_kind = band\nphi_low = 1.0\nphi_high = 0.05\nalpha0 = 0.05\n"
                 "h = 5e-3\nt_end = 0.2\nensemble = 4\nn_samples = 5\nlambdas = 1, 4\n")
    out = tmp_path / command
    assert main([command, "--config", str(p), "--out", str(out)]) in (0, 1)
    data = json.loads((out / f"{command}.json").read_text())
    assert data["command"] == command and "passed" in data
    assert first_line(out / f"{command}.csv").startswith("# config_hash=")
