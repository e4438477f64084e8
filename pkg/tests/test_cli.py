import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from wgqed.cli import main
from wgqed.config import ConfigError, build_model, config_from_dict, parse_config, serialize_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


SPECTRUM = {
    "version": 1,
    "experiment": "spectrum",
    "model": {"n_sites": 6, "kind": "eit", "gamma_1d": 1.0, "gamma_prime": 3.0, "rabi": 2.0},
    "grids": {"detuning": {"start": -0.2, "stop": 0.2, "num": 5}, "interaction": [0.0, 0.4]},
}


def test_defaults_filled_in():
    cfg = config_from_dict({"experiment": "linear", "model": {"n_sites": 3}, "grids": {"detuning": [0.0]}})
    assert cfg.model.kind == "two_level"
    assert cfg.model.phase == pytest.approx(np.pi / 2)
    assert cfg.drive_amplitude == 1e-6
    assert cfg.numerics.tol == 1e-8 and cfg.numerics.n_max == 2
    assert cfg.model.hardcore


def test_unknown_key_rejected_with_suggestions():
    raw = dict(SPECTRUM, model=dict(SPECTRUM["model"], gamma1d=1.0))
    with pytest.raises(ConfigError, match="unknown key 'gamma1d'.*gamma_1d"):
        config_from_dict(raw)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    cfg = parse_config((CONFIGS / name).read_text())
    assert cfg.version == 1


def test_large_chain_spectrum_config():
    cfg = parse_config((CONFIGS / "spectrum_n200.json").read_text())
    m = build_model(cfg, 0.2, 0.1)
    assert m.n_sites == 200 and m.levels.gamma_prime == 3.0 and m.levels.rabi == 2.0
    assert m.drive.amplitude == 1e-6 and m.detuning == 0.1
    assert m.interaction.u_ss[0, 1] == 0.2


@pytest.mark.parametrize(
    "patch, msg",
    [
        ({"drive_amplitude": 0.0}, "nonzero drive_amplitude"),
        ({"model": {"n_sites": 0}}, "n_sites"),
        ({"model": {"n_sites": 3, "gamma_prime": -1.0}}, "out of range"),
        ({"model": {"n_sites": 3, "rabi": 1.0}}, "only meaningful"),
        ({"grids": {"tau": [-1.0, 0.0]}}, "nonnegative"),
        ({"numerics": {"n_max": 1}}, "n_max"),
        ({"version": 2}, "version"),
        ({"experiment": "movie"}, "experiment must be"),
    ],
)
def test_invalid_configs(patch, msg):
    raw = {"experiment": "g2", "model": {"n_sites": 3}, "grids": {"tau": [0.0, 1.0]}}
    raw.update(patch)
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(raw)


def test_round_trip():
    cfg = config_from_dict(SPECTRUM)
    again = config_from_dict(json.loads(serialize_config(cfg)))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_spectrum_run_and_determinism(tmp_path):
    cfg = write(tmp_path, SPECTRUM)
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    a = (tmp_path / "a" / "spectrum.csv").read_bytes()
    assert a == (tmp_path / "b" / "spectrum.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a" / "spectrum.csv")
    assert header == ["detuning", "C", "T1", "T2"]
    assert len(rows) == 10
    meta = json.loads((tmp_path / "a" / "spectrum.json").read_text())
    assert meta["config"]["experiment"] == "spectrum"
    assert {"numpy", "scipy", "wgqed"} <= set(meta["versions"])
    assert meta["wall_time"] > 0


def test_evolve_columns(tmp_path):
    raw = {
        "experiment": "evolve",
        "model": {"n_sites": 60, "kind": "eit", "gamma_1d": 1.0, "rabi": 1.0},
        "drive_amplitude": 0.0,
        "grids": {"time": [0.0, 5.0]},
        "params": {"sigma_p": 5.0, "mu": 25.0},
    }
    assert main(["evolve", "--config", str(write(tmp_path, raw)), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "evolve.csv")
    assert header == ["site", "t", "pop_ss", "pop_ee", "pop_ss_predicted"]
    assert len(rows) == 120
    meta = json.loads((tmp_path / "evolve.json").read_text())
    assert meta["norms"][0] == pytest.approx(1.0)


def test_compare_columns(tmp_path):
    raw = {
        "experiment": "compare",
        "model": {"n_sites": 5, "kind": "eit", "gamma_1d": 2.0, "gamma_prime": 2.0, "rabi": 1.0},
        "grids": {"tau": {"start": 0.0, "stop": 2.0, "num": 5}},
        "params": {"interaction": 1.0},
        "output": {"prefix": "cmp"},
    }
    assert main(["compare", "--config", str(write(tmp_path, raw)), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "cmp.csv")
    assert header == ["tau", "g2_time", "g2_frequency", "rel_deviation"]
    assert max(float(r[3]) for r in rows) < 1e-4


def test_complex_columns_split(tmp_path):
    raw = {"experiment": "linear", "model": {"n_sites": 2}, "grids": {"detuning": [0.0, 0.5]}}
    assert main(["linear", "--config", str(write(tmp_path, raw)), "--out", str(tmp_path)]) == 0
    header, _ = read_csv(tmp_path / "linear.csv")
    assert header == ["delta", "chi_re", "chi_im", "r_re", "r_im", "t_re", "t_im", "R", "T"]


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, dict(SPECTRUM, model={"n_sites": 3, "colour": "red"}), "bad.json")
    assert main(["spectrum", "--config", str(bad)]) == 2
    assert "colour" in capsys.readouterr().err
    assert main(["spectrum", "--config", str(tmp_path / "missing.json")]) == 2
    good = write(tmp_path, SPECTRUM)
    assert main(["linear", "--config", str(good)]) == 2
    assert main(["spectrum", "--config", str(good), "--workers", "0"]) == 2
    assert main(["spectrum", "--config", str(good), "--tol", "0.1"]) == 2
    big = write(tmp_path, dict(SPECTRUM, numerics={"dim_cap": 10}), "big.json")
    assert main(["spectrum", "--config", str(big)]) == 2
    fock = {
        "experiment": "fock",
        "model": {"n_sites": 2},
        "drive_amplitude": 0.0,
        "params": {"n_photons": 1, "t_final": 5.0, "radii": [0.05, 0.1, 0.2]},
    }
    assert main(["fock", "--config", str(write(tmp_path, fock, "f.json")), "--out", str(tmp_path)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "wgqed.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "spectrum" in out.stdout and "appendixD" in out.stdout
