import json

import numpy as np
import pytest

from sns.config import ConfigError, ExperimentConfig, load_config, parse_config
from sns.io import CheckpointError, load_checkpoint, read_csv, write_csv, write_json
from sns.solver import run_trajectory


def test_parse_sections_and_types():
    cfg = parse_config("""
[grid]
n = 48
dealias = none
[noise]
alpha0 = 0.1
phi_low = 0.1
[run]
t_end = 1e-2
ensemble = 4.0
run_dpd = no
lambdas = 1, 2, 8
suites = heatflow; wick
""")
    assert cfg.n == 48 and cfg.dealias == "none"
    assert cfg.ensemble == 4 and cfg.run_dpd is False
    assert cfg.lambdas == (1.0, 2.0, 8.0)
    assert cfg.suites == ("heatflow", "wick")


def test_sectionless_text_and_overrides():
    cfg = parse_config("n = 16\nseed = 3\n", seed=9, out_dir=None)
    assert cfg.n == 16 and cfg.seed == 9 and cfg.out_dir == "out"


@pytest.mark.parametrize("text", [
    "n = 15",
    "n = sixteen",
    "h = -1",
    "bogus_key = 1",
    "run_dpd = maybe",
    "phi_kind = fancy",
    "dealias = three_halves",
    "rough_fraction = 2",
    "[run\nn=4",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.ini")


def test_hash_ignores_output_location_only():
    a = ExperimentConfig()
    assert a.config_hash() == a.replace(out_dir="elsewhere", threads=4).config_hash()
    assert a.config_hash() != a.replace(seed=1).config_hash()
    assert len(a.config_hash()) == 16


def test_spectrum_kinds():
    cfg = ExperimentConfig(n=16, phi_kind="band", phi_low=0.5, phi_high=0.05, alpha0=0.05, split_radius=2.0)
    spec = cfg.spectrum()
    assert np.max(np.abs(spec.phi1)) == pytest.approx(0.05)
    assert np.max(np.abs(spec.phi2)) == pytest.approx(0.5)
    table = ExperimentConfig(n=16, phi_kind="table", phi_low=0.01, alpha0=0.05, phi_table="1,0=0.3; 5,0=0.04")
    spec = table.spectrum()
    g = spec.grid
    assert abs(spec.phi[1, 0]) == pytest.approx(0.3)
    assert abs(spec.phi[5, 0]) == pytest.approx(0.04)
    assert abs(spec.phi[-5 % 16, 0]) == pytest.approx(0.04)
    assert abs(spec.phi[3, 3]) == pytest.approx(0.01)
    assert g.n == 16
    with pytest.raises(ConfigError):
        ExperimentConfig(n=16, phi_kind="table", phi_low=0.01, alpha0=0.05, phi_table="5,0=0.4").spectrum()


def test_csv_and_json_carry_hash(tmp_path):
    write_csv(tmp_path / "a.csv", [{"x": 1, "y": 2.5}, {"x": 2}], ("x", "y"), "abc")
    assert (tmp_path / "a.csv").read_text().startswith("# config_hash=abc\n")
    rows = read_csv(tmp_path / "a.csv")
    assert rows == [{"x": "1", "y": "2.5"}, {"x": "2", "y": ""}]
    write_json(tmp_path / "a.json", {"v": np.float64(1.5), "arr": np.arange(2)}, "abc")
    data = json.loads((tmp_path / "a.json").read_text())
    assert data == {"config_hash": "abc", "v": 1.5, "arr": [0, 1]}


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    d = tmp_path_factory.mktemp("ck")
    cfg = ExperimentConfig(n=16, h=1e-3, t_end=0.004, ensemble=2, checkpoint_every=2)
    run_trajectory(cfg, checkpoint_dir=str(d))
    return d / "checkpoint_00000002.snsc"


def test_checkpoint_contents(checkpoint):
    ck = load_checkpoint(checkpoint)
    head = ck["header"]
    assert head["step"] == 2 and head["n"] == 16 and head["batch"] == [2]
    assert set(ck["fields"]) >= {"X", "Y", "w", "wH", "wL", "u_r", "v"}
    assert ck["fields"]["w"].shape == (2, 2, 16, 16)


@pytest.mark.parametrize("where", [10, -3, 200])
def test_corruption_detected(checkpoint, tmp_path, where):
    buf = bytearray(checkpoint.read_bytes())
    buf[where] ^= 0xFF
    bad = tmp_path / "bad.snsc"
    bad.write_bytes(bytes(buf))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_truncated_and_mismatched(checkpoint, tmp_path):
    bad = tmp_path / "short.snsc"
    bad.write_bytes(checkpoint.read_bytes()[:5])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.snsc")
    from sns.spectral import TorusGrid
    with pytest.raises(CheckpointError):
        load_checkpoint(checkpoint, TorusGrid(32))
