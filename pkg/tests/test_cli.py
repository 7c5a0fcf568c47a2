import csv
import json

import numpy as np
import pytest

from inelastic1d.cli import ConfigError, RunConfig, build_parser, load_config, main
from inelastic1d.solver import load_state

FAST = "0.2,0.1,0.05"


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_defaults():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.study.epsilon_list == (0.2, 0.1, 0.05, 0.025)


def test_config_values_parsed(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[scenario]\nepsilon = 0.05\nbranch = -1\nr0 = 1.5\n\n[study]\n"
                    "epsilon_list = 0.2, 0.1 0.05\nfull = yes\n\n[output]\nplot_script = false\n")
    cfg = load_config(path)
    assert cfg.scenario.epsilon == 0.05 and cfg.scenario.branch == -1
    assert cfg.study.epsilon_list == (0.2, 0.1, 0.05) and cfg.study.full
    assert cfg.output.plot_script is False


def test_unknown_key_reports_line(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nepsilon = 0.1\n\n[numerics]\nnmax = 4\n")
    with pytest.raises(ConfigError, match=r"bad\.ini:5: unknown key 'nmax'.*n_max"):
        load_config(path)


def test_unknown_section_and_bad_value():
    with pytest.raises(ConfigError, match=r":3: unknown section \[solver\]"):
        load_config(text="[scenario]\nv0 = 1\n[solver]\nx = 1\n")
    with pytest.raises(ConfigError, match=r":2: bad value for scenario.epsilon"):
        load_config(text="[scenario]\nepsilon = small\n")
    with pytest.raises(ConfigError, match="scheme"):
        load_config(text="[numerics]\nscheme = euler\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.ini")


def test_flags_override_config(tmp_path):
    from inelastic1d.cli import apply_overrides

    cfg = load_config(text="[study]\norder = 1\ncase = stationary\n")
    args = build_parser().parse_args(["convergence", "--order", "2", "--case", "nonstationary",
                                      "--epsilon-list", FAST, "--out-dir", str(tmp_path)])
    out = apply_overrides(cfg, args)
    assert out.study.order == 2 and out.study.case == "nonstationary"
    assert out.study.epsilon_list == (0.2, 0.1, 0.05) and out.output.out_dir == str(tmp_path)


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nspeed = 2\n")
    assert main(["evolve", "--config", str(path), "--quiet"]) == 2
    assert "bad.ini:2" in capsys.readouterr().err
    assert main(["convergence", "--epsilon-list", "0.2,x", "--quiet", "--out-dir", str(tmp_path)]) == 2


def test_budget_error_exit_code(tmp_path, capsys):
    assert main(["convergence", "--epsilon-list", "0.2,0.1,0.01", "--quiet", "--out-dir", str(tmp_path)]) == 2
    assert "grid budget" in capsys.readouterr().err


def test_thread_env_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("INELASTIC1D_THREADS", "zero")
    assert main(["evolve", "--quiet", "--out-dir", str(tmp_path)]) == 2


def test_convergence_command(tmp_path):
    assert main(["convergence", "--epsilon-list", FAST, "--order", "1", "--quiet", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "convergence.csv")
    assert rows[0] == ["epsilon", "error_norm", "order_k", "case"]
    assert [r[0] for r in rows[1:]] == ["0.2", "0.1", "0.05"]
    assert all(r[2] == "1" and r[3] == "stationary" for r in rows[1:])
    manifest = json.loads((tmp_path / "manifest_convergence.json").read_text())
    assert manifest["command"] == "convergence"
    assert set(manifest["files"]) >= {"convergence.csv", "convergence_report.json", "plot_convergence.py"}
    assert manifest["config"]["study"]["order"] == 1
    assert {"numpy", "scipy", "python", "inelastic1d"} <= set(manifest["versions"])
    assert len(manifest["config_hash"]) == 64
    compile((tmp_path / "plot_convergence.py").read_text(), "plot", "exec")


def test_application_command(tmp_path):
    assert main(["application", "--epsilon-list", FAST, "--quiet", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "application.csv")
    assert rows[0] == ["epsilon", "alpha", "p0", "p1", "p_plus_0", "p_plus_1", "ratio0", "ratio1"]
    assert len(rows) == 4
    assert float(rows[-1][6]) == pytest.approx(0.5, abs=1e-3)


def test_evolve_command(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[scenario]\nepsilon = 0.2\n[output]\nplot_script = no\n")
    assert main(["evolve", "--config", str(ini), "--quiet", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "populations.csv")
    assert rows[0] == ["n", "population"] and len(rows) == 10
    assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-10)
    state = load_state(tmp_path / "state.npz")
    assert state.params.eps == 0.2 and state.time == 1.0
    assert not (tmp_path / "plot_evolve.py").exists()


def test_coeffs_command(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[numerics]\nn_max = 4\n[study]\nx_points = 11\n")
    assert main(["coeffs", "--config", str(ini), "--quiet", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "coeffs.csv")
    assert rows[0] == ["n", "x", "re", "im", "l", "h"]
    assert len(rows) == 1 + 4 * 5 * 11
    assert {(r[4], r[5]) for r in rows[1:]} == {("0", "0"), ("1", "1"), ("1", "2"), ("2", "2")}
    vals = np.array([[float(r[2]), float(r[3])] for r in rows[1:]])
    assert np.all(np.isfinite(vals))


def test_coeffs_rejects_nonstationary(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[scenario]\nr0 = 1.5\n")
    assert main(["coeffs", "--config", str(ini), "--quiet", "--out-dir", str(tmp_path)]) == 2


def test_check_command(tmp_path, capsys):
    assert main(["check", "--epsilon-list", FAST, "--quiet", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "check.csv")
    assert rows[0] == ["criterion", "value", "tolerance", "passed"]
    assert all(r[3] == "True" for r in rows[1:])
    assert "invariants hold" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "manifest_check.json").read_text())
    assert manifest["failed"] == []


def test_check_breach_exit_code(tmp_path):
    # a strong potential leaves the perturbative regime; spill checking is disabled so the run completes
    ini = tmp_path / "run.ini"
    ini.write_text("[scenario]\npotential_strength = 25\n[numerics]\nspill_threshold = 1\n")
    assert main(["check", "--config", str(ini), "--epsilon-list", FAST, "--quiet", "--out-dir", str(tmp_path)]) == 1
    failed = json.loads((tmp_path / "manifest_check.json").read_text())["failed"]
    assert "p1_vs_first_order" in failed


def test_numerical_error_exit_code(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[scenario]\nepsilon = 0.2\npotential_strength = 25\n")
    assert main(["evolve", "--config", str(ini), "--quiet", "--out-dir", str(tmp_path)]) == 2
    assert "raise n_max" in capsys.readouterr().err
