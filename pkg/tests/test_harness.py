import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavityg2 import config as cfgmod
from cavityg2 import experiments as ex
from cavityg2 import io
from cavityg2.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from cavityg2.config import ConfigError, ExperimentConfig
from cavityg2.correlations import CorrelationSeries
from cavityg2.dynamics import TrajectoryConfig
from cavityg2.models import JCParams


@pytest.mark.parametrize("model", cfgmod.MODELS)
def test_preset_round_trip(model):
    cfg = cfgmod.preset(model)
    assert cfgmod.loads(cfgmod.dumps(cfg)) == cfg


pos = st.floats(1e-3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(g=pos, theta=st.floats(-50, 50), pump=st.floats(0, 10), gamma=st.floats(0, 5),
       n_traj=st.integers(1, 10**6), seed=st.integers(0, 2**64 - 1), scale=pos,
       tau_max=st.none() | pos)
def test_config_round_trip_property(g, theta, pump, gamma, n_traj, seed, scale, tau_max):
    cfg = ExperimentConfig(
        model="jc-effective",
        params=JCParams(g=g, theta=theta, pump=pump, gamma=gamma),
        decay_scale=scale,
        solver=TrajectoryConfig(n_traj=n_traj, seed=seed),
        correlation=cfgmod.CorrelationSettings(tau_max=tau_max),
    )
    assert cfgmod.loads(cfgmod.dumps(cfg)) == cfg


def test_config_errors():
    with pytest.raises(ConfigError):
        cfgmod.loads("model: [unclosed")
    with pytest.raises(ConfigError):
        cfgmod.loads("model: jc-exact\nparams: {g: 1, theta: 1, pump: 0.1, gamma: 0.1, bogus: 3}\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("model: jc-exact\nparams: {g1: 1}\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("model: nope\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("model: cavity\nsolver: {dt: -1}\n")
    with pytest.raises(ConfigError):
        cfgmod.preset("jc-exact", "eit-solid")
    with pytest.raises(ConfigError):
        ExperimentConfig(model="eit-exact", params=JCParams(g=1, theta=1, pump=0.1, gamma=0.1))


def test_overrides():
    cfg = cfgmod.apply_overrides(cfgmod.preset("jc-exact", "jc-solid"), ["params.pump=0.3", "solver.n_traj=7"])
    assert cfg.params.pump == 0.3 and cfg.solver.n_traj == 7
    with pytest.raises(ConfigError):
        cfgmod.apply_overrides(cfg, ["nosuch.key=1"])
    with pytest.raises(ConfigError):
        cfgmod.apply_overrides(cfg, ["params.pump"])


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tau = np.cumsum(rng.random(50))
    tau[0] = 0.0
    s = CorrelationSeries(tau, rng.random(50) * 3, rng.random(50) * 1e-3, "synthetic")
    path = io.write_series_csv(tmp_path / "s.csv", s, {"params": {"g": 0.1 + 0.2}})
    back, meta = io.read_series_csv(path)
    np.testing.assert_array_equal(back.tau, s.tau)
    np.testing.assert_array_equal(back.g2, s.g2)
    np.testing.assert_array_equal(back.stderr, s.stderr)
    assert meta["params"]["g"] == 0.1 + 0.2
    assert meta["artifact_version"].startswith("0.1.0")
    lines = path.read_text().splitlines()
    assert all(line.startswith("#") for line in lines[:3])
    assert "tau_kappa,g2,stderr" in lines


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "out.txt"
    io.atomic_write_text(target, "first")

    def boom(src, dst):
        raise OSError("rename failed")

    monkeypatch.setattr(io.os, "replace", boom)
    with pytest.raises(OSError):
        io.atomic_write_text(target, "second")
    assert target.read_text() == "first"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_output_directory_env(monkeypatch, tmp_path):
    monkeypatch.setenv(io.OUT_ENV, str(tmp_path / "here"))
    assert io.default_output_dir() == tmp_path / "here"
    monkeypatch.delenv(io.OUT_ENV)
    assert str(io.default_output_dir()) == io.DEFAULT_OUT


def test_cli_uses_env_directory(monkeypatch, tmp_path):
    monkeypatch.setenv(io.OUT_ENV, str(tmp_path))
    assert main(["derive-params"]) == EXIT_OK
    assert (tmp_path / "derive-params" / "derived.json").exists()


def test_derive_params_exit_codes(tmp_path):
    assert main(["derive-params", "--preset", "eit-dashed", "--golden", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["derive-params", "--model", "jc-exact", "--out", str(tmp_path / "b")]) == EXIT_CONFIG
    assert main(["derive-params", "--set", "params.pump=0.3", "--golden", "--out", str(tmp_path / "c")]) == EXIT_CONFIG
    report = json.loads((tmp_path / "a" / "derived.json").read_text())
    assert report["ok"] and report["derived"]["gamma0"] == pytest.approx(0.5)


def test_symmetric_case_marks_vieta_pass(tmp_path):
    cfg = cfgmod.apply_overrides(cfgmod.preset("eit-exact"), ["params.delta=0.0"])
    report = ex.cmd_derive_params(cfg, tmp_path)
    assert report.checks["vieta"] and report.checks["eps_plus == -eps_minus"]
    assert "[pass] vieta" in (tmp_path / "summary.txt").read_text()


def test_g2_jc_exact_dashed_writes_params_and_antibunching(tmp_path):
    series, report = ex.cmd_g2(cfgmod.preset("jc-exact", "jc-dashed"), tmp_path)
    assert report.g2_zero < 1
    _, meta = io.read_series_csv(tmp_path / "g2.csv")
    assert meta["params"] == dataclasses.asdict(cfgmod.PRESETS["jc-dashed"])
    assert meta["model"] == "jc-exact"
    saved = json.loads((tmp_path / "report.json").read_text())
    assert cfgmod.from_dict(saved["config"]) == cfgmod.preset("jc-exact", "jc-dashed")


def test_g2_effective_eit_solid_zero_at_origin(tmp_path):
    _, report = ex.cmd_g2(cfgmod.preset("eit-effective", "eit-solid"), tmp_path, ("json",))
    assert report.g2_zero == 0.0
    assert json.loads((tmp_path / "report.json").read_text())["g2_zero"] == 0.0


def test_g2_cavity_is_flat(tmp_path):
    assert main(["g2", "--model", "cavity", "--out", str(tmp_path), "--format", "csv,svg"]) == EXIT_OK
    series, _ = io.read_series_csv(tmp_path / "g2.csv")
    assert np.max(np.abs(series.g2 - 1)) < 1e-6
    assert (tmp_path / "g2.svg").exists()


def test_numerical_failures_exit_3(tmp_path):
    assert main(["g2", "--model", "cavity", "--set", "params.pump=0.0", "--out", str(tmp_path)]) == EXIT_NUMERIC
    args = ["g2", "--model", "cavity", "--method", "jump-pair-stochastic", "--set", "params.pump=0.0001",
            "--set", "solver.n_traj=3", "--set", "solver.t_max=3.0", "--set", "solver.dt=0.005", "--set", "correlation.tau_max=1.0",
            "--set", "correlation.t_burn=0.5", "--out", str(tmp_path)]
    assert main(args) == EXIT_NUMERIC


def test_config_errors_exit_2(tmp_path):
    assert main(["g2", "--format", "csv,gif", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["g2", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == EXIT_CONFIG
    coarse = ["g2", "--method", "jump-pair-stochastic", "--set", "solver.dt=0.5", "--set", "solver.t_max=40",
              "--out", str(tmp_path)]
    assert main(coarse) == EXIT_CONFIG
    assert main(["spectrum", "--model", "jc-effective", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_config_file_and_seed_flag(tmp_path):
    path = tmp_path / "run.yaml"
    cfg = cfgmod.apply_overrides(cfgmod.preset("cavity"), [
        "correlation.method=jump-pair-stochastic", "solver.n_traj=200", "solver.t_max=30.0", "solver.dt=0.005",
        "correlation.tau_max=4.0", "correlation.n_bins=8", "correlation.t_burn=5.0"])
    path.write_text(cfgmod.dumps(cfg))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["g2", "--config", str(path), "--seed", "42", "--out", str(out)]) == EXIT_OK
        outs.append((out / "g2.csv").read_bytes())
    assert outs[0] == outs[1]
    _, meta = io.read_series_csv(tmp_path / "run0" / "g2.csv")
    assert meta["seed"] == 42 and meta["config"]["solver"]["seed"] == 42
    out = tmp_path / "other"
    assert main(["g2", "--config", str(path), "--seed", "43", "--out", str(out)]) == EXIT_OK
    assert (out / "g2.csv").read_bytes() != outs[0]


def test_compare_csv_files_and_preset(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["g2", "--model", "jc-exact", "--preset", "jc-solid", "--out", str(a)]) == EXIT_OK
    assert main(["g2", "--model", "jc-effective", "--preset", "jc-solid", "--out", str(b)]) == EXIT_OK
    out = tmp_path / "cmp"
    assert main(["compare", str(a / "g2.csv"), str(a / "g2.csv"), "--out", str(out)]) == EXIT_OK
    same = json.loads((out / "comparison.json").read_text())["results"]
    assert same["max_abs"] == 0 and same["rms"] == 0
    assert main(["compare", str(a / "g2.csv"), str(b / "g2.csv"), "--out", str(out)]) == EXIT_OK
    assert main(["compare", str(a / "g2.csv"), "--out", str(out)]) == EXIT_CONFIG
    assert main(["compare", "--preset", "eit-dashed", "--out", str(out)]) == EXIT_OK
    res = json.loads((out / "comparison.json").read_text())["results"]
    assert res["dominant_rel_diff"] < 0.05


def test_spectrum_reports_second_photon_detuning(tmp_path):
    assert main(["spectrum", "--preset", "jc-solid", "--out", str(tmp_path)]) == EXIT_OK
    res = json.loads((tmp_path / "spectrum.json").read_text())
    assert res["results"]["second_photon_detuning"] == pytest.approx((2 - math.sqrt(2)) * 20, rel=1e-10)
    assert res["conventions"]["theta_sign"] == 1
    assert main(["spectrum", "--model", "eit-exact", "--manifolds", "1", "--out", str(tmp_path)]) == EXIT_OK


@pytest.fixture(scope="module")
def fig2(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2")
    series, report = ex.cmd_reproduce_fig2(out, ("csv", "json", "svg"))
    return out, series, report


def test_reproduce_fig2_outputs(fig2):
    out, series, report = fig2
    assert len(series) == 8
    for name in series:
        assert (out / f"{name}.csv").exists()
    assert (out / "fig2.svg").exists() and (out / "summary.json").exists()
    assert report.results["jc_exact_solid_2g_modulation"] is True
    assert report.results["recovery_order_exact"] == report.results["gamma0_order"]
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["results"]["exact_vs_effective"]) == {"jc-dashed", "jc-solid", "eit-dashed", "eit-solid"}


def test_reproduce_fig2_is_byte_identical(fig2, tmp_path):
    out, series, _ = fig2
    ex.cmd_reproduce_fig2(tmp_path, ("csv",))
    for name in series:
        assert (tmp_path / f"{name}.csv").read_bytes() == (out / f"{name}.csv").read_bytes()
