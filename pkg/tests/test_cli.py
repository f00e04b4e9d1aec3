import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from ctqec import cli, scenarios
from ctqec.integrators import SimConfig
from ctqec.numerics import DomainError


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


def summary(err):
    out = {}
    for line in err.splitlines():
        if line.startswith("# ") and " = " in line:
            k, v = line[2:].split(" = ", 1)
            out[k] = v
    return out


def test_run_markov_1q_equilibrium(capsys, tmp_path):
    path = tmp_path / "out.csv"
    code, _, err = run_cli(capsys, "run", "markov-1q", "--out", str(path))
    assert code == 0
    header, rows = read_csv(path.read_text())
    assert header == ["t", "alpha", "alpha_oracle", "abs_error"]
    assert rows[-1, 1] == pytest.approx(0.9, abs=1e-4)
    s = summary(err)
    assert float(s["max_abs_error"]) < 1e-6
    assert "wall_time" in s


def test_config_file_and_overrides(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# rates\nkappa = 2\nlambda = 1   # noise\nt_max = 1\n")
    code, out, err = run_cli(capsys, "run", "markov-1q", "--config", str(cfg), "--set", "kappa=4")
    assert code == 0
    assert float(summary(err)["equilibrium_oracle"]) == pytest.approx(1 - 1 / 6)
    assert out.startswith("t,alpha,")


def test_zero_noise_alpha_is_one(capsys):
    code, out, _ = run_cli(capsys, "run", "markov-1q", "--set", "lambda=0", "--set", "t_max=1")
    assert code == 0
    _, rows = read_csv(out)
    np.testing.assert_array_equal(rows[:, 1], 1.0)


def test_identical_config_gives_identical_bytes(tmp_path, capsys):
    outs = []
    for i in range(2):
        path = tmp_path / f"o{i}.csv"
        assert cli.main(["run", "adl-sme", "--set", "n_traj=8", "--set", "t_max=0.2",
                         "--set", "seed=11", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]
    assert b"\r\n" not in outs[0]


def test_csv_uses_17_significant_digits(capsys):
    _, out, _ = run_cli(capsys, "run", "markov-1q", "--set", "t_max=0.1")
    value = out.splitlines()[2].split(",")[1]
    assert float(value) == float("%.17g" % float(value))
    assert len(value.replace(".", "").lstrip("0")) >= 15


def test_usage_errors_exit_2(capsys):
    assert run_cli(capsys, "run", "no-such-scenario")[0] == 2
    assert run_cli(capsys, "run", "markov-1q", "--set", "bogus=1")[0] == 2
    assert run_cli(capsys, "run", "markov-1q", "--set", "kappa")[0] == 2
    assert run_cli(capsys, "run", "markov-1q", "--set", "kappa=abc")[0] == 2
    assert run_cli(capsys, "run", "markov-1q", "--config", "/nonexistent/file")[0] == 2
    assert run_cli(capsys, "sweep", "--param", "t_max", "--values", "1", "--scenario", "markov-1q")[0] == 2
    assert run_cli(capsys, "sweep", "--param", "kappa", "--values", "1")[0] == 2
    assert run_cli(capsys)[0] == 2


def test_invariant_violations_exit_3(capsys):
    code, _, err = run_cli(capsys, "run", "markov-1q", "--set", "kappa=-1")
    assert code == 3 and "kappa" in err
    code, _, err = run_cli(capsys, "run", "markov-1q", "--set", "dt=1")
    assert code == 3 and "exceeds" in err


def test_numeric_guard_exit_3(capsys):
    # a coherent start with kappa dt = 0.04 trips the eigenvalue guard
    args = ["run", "adl-sme", "--set", "initial_rotation=1.2", "--set", "dt=0.01",
            "--set", "n_traj=50", "--set", "t_max=2"]
    assert run_cli(capsys, *args)[0] == 3
    assert run_cli(capsys, *args, "--set", "stochastic_min_eigenvalue=-10")[0] == 0


def test_list(capsys):
    code, out, _ = run_cli(capsys, "list")
    assert code == 0
    for name in scenarios.SCENARIOS:
        assert name in out


def test_sweep_nonmarkov_equilibria(capsys):
    code, out, err = run_cli(capsys, "sweep", "--scenario", "nonmarkov-1q", "--param", "kappa",
                             "--values", "1,2,5")
    assert code == 0
    header, rows = read_csv(out)
    assert header[:2] == ["run", "kappa"]
    s = summary(err)
    for i, want in enumerate((0.6, 0.75, 27 / 29)):
        assert float(s[f"run{i}.equilibrium_oracle"]) == pytest.approx(want)
        assert float(s[f"run{i}.equilibrium_numeric"]) == pytest.approx(want, abs=1e-4)
    assert sorted(set(rows[:, 1])) == [1.0, 2.0, 5.0]
    assert out.count("run,kappa") == 1


def test_sweep_empty_values(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--scenario", "markov-1q", "--param", "kappa", "--values", "")
    assert code == 0 and out == ""


def test_sweep_dt_halving(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--scenario", "markov-1q", "--param", "dt",
                           "--values", "0.04,0.02", "--set", "kappa=1", "--set", "lambda=1",
                           "--set", "t_max=2")
    assert code == 0
    header, rows = read_csv(out)
    err_col = header.index("abs_error")
    e = [rows[rows[:, 0] == i, err_col].max() for i in (0, 1)]
    assert e[0] / e[1] == pytest.approx(16, rel=0.1)


def test_sweep_seeds_differ_per_run():
    assert cli.run_seed(0, 0) != cli.run_seed(0, 1)
    assert cli.run_seed(3, 2) == cli.run_seed(3, 2)


def test_config_config_key_validation():
    cfg, opts = cli.build_config("adl-sme", {"n_qubits": "3", "lambda": "0.2"})
    assert cfg.lam == 0.2 and opts == {"n_qubits": "3"}
    with pytest.raises(cli.UsageError):
        cli.build_config("markov-1q", {"n_qubits": "3"})
    with pytest.raises(cli.UsageError):
        cli.parse_config_text("kappa 3")


def test_scenario_run_rejects_unknown_options():
    with pytest.raises(KeyError):
        scenarios.run("nope", SimConfig())
    with pytest.raises(DomainError):
        scenarios.run("markov-1q", SimConfig(kappa=1, lam=1), {"n_qubits": 3})


def test_markov_3q_drift_shrinks_with_r():
    drifts = []
    for kappa in (10.0, 100.0):
        rep = scenarios.run("markov-3q", SimConfig(kappa=kappa, lam=1, t_max=1, store_stride=10))
        d = rep.column("drift")
        assert np.all(np.isfinite(d)) and np.all(d >= 0)
        drifts.append(rep.summary["mean_drift"])
    assert drifts[1] < drifts[0]


def test_markov_3q_zero_noise_drift_is_zero():
    rep = scenarios.run("markov-3q", SimConfig(kappa=10, lam=0, t_max=0.5, dt=0.001))
    np.testing.assert_array_equal(rep.column("drift"), 0)
    np.testing.assert_array_equal(rep.column("one_minus_alpha"), 0)


def test_nonmarkov_1q_recurrence_counts():
    rep = scenarios.run("nonmarkov-1q", SimConfig(kappa=1, gamma=1, t_max=20))
    # alpha' = -gamma exp(-kappa t) sin(2 gamma t): maxima at gamma t = n pi,
    # and those past n = 4 fall below the 1e-7 prominence floor
    assert rep.summary["local_maxima"] == 4
    assert rep.summary["local_maxima_before_gt5"] == 1
    assert rep.summary["partial_recurrences"] == 1


def test_nonmarkov_3q_summary_fields():
    rep = scenarios.run("nonmarkov-3q", SimConfig(kappa=100, gamma=1, t_max=200, dt=1))
    assert rep.summary["closure_residual"] < 1e-12
    assert rep.summary["max_imag_c000"] < 1e-12
    assert "omega_fitted" not in rep.summary
    assert rep.column("c000")[0] == pytest.approx(1.0)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ctqec", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "markov-1q" in res.stdout
