"""Test configuration loading and the command-line front end."""

import json

import numpy as np
import pandas as pd
import pytest

from pdc_g2.cli import main
from pdc_g2.config import RESOLVED_NAME, SEED_ENV, load_config, preset_params, write_resolved
from pdc_g2.errors import ConfigInvalid
from pdc_g2.model.params import PPKTP_TAU_O, single_mode_pump_duration


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_preset_values():
    cfg = load_config(preset="ppktp-30ps-heralded", env={})
    assert cfg.crystal.pump_fwhm == 30.0
    assert cfg.experiment.mean_pairs == 0.2
    assert preset_params("ppktp-3ps").pump_fwhm == 3.0


def test_defaults_are_explicit():
    cfg = load_config(env={})
    assert cfg.schema_version == 1
    assert cfg.window() == 0.5
    grid = cfg.tau_grid()
    assert grid[0] == -25.0 and grid[-1] == 25.0


def test_custom_tau_grid():
    cfg = load_config(overrides={"estimator": {"tau_span": 10.0, "tau_step": 2.5}}, env={})
    np.testing.assert_allclose(cfg.tau_grid(), [-10.0, -7.5, -5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0])


@pytest.mark.parametrize("doc", [
    {"crystal": {"pump_fwhm": -1.0}},
    {"crystal": {"tau_o": 1.0, "tau_e": 1.0}},
    {"experiment": {"mean_pairs": 0.9}},
    {"unknown": 1},
    {"crystal": {"colour": "green"}},
    {"schema_version": 2},
    {"format": "xml"},
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigInvalid):
        load_config(overrides=doc, env={})


def test_unknown_preset():
    with pytest.raises(ConfigInvalid):
        load_config(preset="bbo-1ps", env={})


def test_precedence(tmp_path):
    path = _write(tmp_path, {"preset": "ppktp-3ps", "experiment": {"seed": 5, "n_pulses": 10}})
    cfg = load_config(config_path=path, env={})
    assert cfg.crystal.pump_fwhm == 3.0 and cfg.experiment.seed == 5
    assert load_config(config_path=path, env={SEED_ENV: "9"}).experiment.seed == 9
    cfg = load_config(config_path=path, overrides={"experiment": {"seed": 11}}, env={SEED_ENV: "9"})
    assert cfg.experiment.seed == 11 and cfg.experiment.n_pulses == 10
    with pytest.raises(ConfigInvalid):
        load_config(env={SEED_ENV: "abc"})


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(config_path=str(bad), env={})
    with pytest.raises(ConfigInvalid):
        load_config(config_path=_write(tmp_path, [1, 2]), env={})


def test_resolved_config_reproduces(tmp_path):
    cfg = load_config(preset="ppktp-3ps", overrides={"out_dir": str(tmp_path)}, env={})
    path = write_resolved(cfg)
    assert load_config(config_path=path, env={}) == cfg


def test_cli_analyze(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert main(["analyze", "--preset", "ppktp-30ps", "--out", str(tmp_path)]) == 0
    scalars = json.loads((tmp_path / "scalars.json").read_text())
    assert scalars["k_number"] == pytest.approx(4.97, abs=0.02)
    assert scalars["coherence_c"] == pytest.approx(0.41, rel=0.05)
    sweep = pd.read_csv(tmp_path / "sweep.csv")
    best = sweep.loc[sweep["inv_coherence"].idxmin(), "pump_fwhm_ps"]
    assert best == pytest.approx(single_mode_pump_duration(PPKTP_TAU_O), rel=0.015)
    assert best == pytest.approx(3.05, rel=0.02)
    assert (tmp_path / RESOLVED_NAME).exists()


def test_cli_analyze_json(tmp_path):
    assert main(["analyze", "--preset", "ppktp-3ps", "--out", str(tmp_path), "--format", "json"]) == 0
    sweep = json.loads((tmp_path / "sweep.json").read_text())
    assert len(sweep["k_number"]) == 201


def test_cli_oracle_coarse_grid_fails(tmp_path):
    path = _write(tmp_path, {"oracle": {"grid_size": 64}})
    assert main(["oracle", "--config", path, "--out", str(tmp_path / "out")]) == 1
    table = pd.read_csv(tmp_path / "out" / "oracle.csv")
    grid = table[(table["check"] == "grid") & (table["preset"] == "ppktp-30ps")]
    assert len(grid) == 1 and not grid["passed"].iloc[0]


def test_cli_simulate_is_reproducible(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    path = _write(tmp_path, {"experiment": {"n_pulses": 3000, "chunk_size": 1000}})
    for name in ("a", "b"):
        assert main(["simulate", "--config", path, "--seed", "3", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "record.csv").read_bytes() == (tmp_path / "b" / "record.csv").read_bytes()
    truth = json.loads((tmp_path / "a" / "truth.json").read_text())
    assert truth["truth"]["seed"] == 3
    resolved = json.loads((tmp_path / "a" / RESOLVED_NAME).read_text())
    assert resolved["experiment"]["seed"] == 3


def test_cli_simulate_empty(tmp_path):
    path = _write(tmp_path, {"experiment": {"n_pulses": 0}})
    assert main(["simulate", "--config", path, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "record.csv").read_text().strip() == "pulse_index,detector,time_ns"
    # nothing to estimate from
    assert main(["estimate", str(tmp_path / "record.csv"), "--config", path, "--out", str(tmp_path)]) == 2


def test_cli_config_error_exit_code(tmp_path):
    path = _write(tmp_path, {"crystal": {"tau_o": 1.0, "tau_e": 1.0}})
    assert main(["analyze", "--config", path, "--out", str(tmp_path)]) == 2


@pytest.mark.slow
def test_cli_reproduce(tmp_path):
    path = _write(tmp_path, {"experiment": {"n_pulses": 200_000}, "sweep": {"count": 21}})
    assert main(["reproduce", "--config", path, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig2" / "sweep.csv").exists()
    for name in ("ppktp-3ps", "ppktp-30ps"):
        g2 = pd.read_csv(tmp_path / "fig3" / name / "g2.csv")
        assert list(g2.columns) == ["tau_ns", "g2_mc", "g2_stderr", "g2_analytic"]
    heralded = pd.read_csv(tmp_path / "fig5" / "heralded.csv")
    far = heralded[heralded["tau_ns"].abs() > 60.0]
    assert np.allclose(far["g2_dh_analytic"], 1.0)
    peak = heralded.loc[heralded["tau_ns"].abs().idxmin(), "g2_dh_analytic"]
    assert peak == pytest.approx(0.306, abs=2e-3)
