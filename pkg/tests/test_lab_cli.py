import json
import warnings

import numpy as np
import pytest

from harmonic_recovery import lab
from harmonic_recovery.bundle_io import write_bundle
from harmonic_recovery.cli import EXIT_CONFIG, EXIT_NUMERICAL, main
from harmonic_recovery.errors import ConfigurationError, IllConditionedGramianWarning, SolverError
from harmonic_recovery.functionals import PointEval, SensorGrid
from harmonic_recovery.lab import ExperimentConfig, fit_slope, run_representer_convergence, run_table
from harmonic_recovery.mesh import build_mesh
from harmonic_recovery.recovery import offline


def test_config_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"functional": "point", "m_list": [4], "n_list": [3, 4], "radius": 0.2}))
    cfg = ExperimentConfig.load(path, {"n_list": [3], "radius": None})
    assert cfg.functional == "point"      # from file
    assert cfg.n_list == [3]              # flag beats file
    assert cfg.radius == 0.2              # unset flag leaves file value
    assert cfg.reference_n == 9           # default


@pytest.mark.parametrize("bad", [
    {"unknown": 1}, {"n_list": [5, 4]}, {"m_list": [5]}, {"functional": "edge"}, {"tol": 1e-3},
    {"experiment": "plot"}, {"n_list": [13]}, {"threads": 0},
])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(bad)


def test_table_values_and_deterministic_csv(tmp_path):
    cfg = ExperimentConfig(functional="gaussian", m_list=[4], n_list=[4, 5, 6], timing=False,
                           out=str(tmp_path / "a.csv"))
    table = run_table(cfg)
    for n in (4, 5, 6):
        assert table.value(4, n) == pytest.approx(0.7, rel=0.15)
    first = (tmp_path / "a.csv").read_bytes()
    run_table(cfg)
    assert (tmp_path / "a.csv").read_bytes() == first
    lines = first.decode().splitlines()
    assert lines[0] == "n,m,e,gramian_cond,M_hat,wall_ms"
    assert lines[1].startswith("4,4,0.70") and lines[1].endswith(",0")


def test_threaded_table_matches_serial():
    base = dict(functional="point", m_list=[4, 9, 16], n_list=[3], timing=False)
    serial = run_table(ExperimentConfig(**base)).to_csv()
    assert run_table(ExperimentConfig(threads=3, **base)).to_csv() == serial


def test_ill_conditioned_cell_is_large_not_na():
    table = run_table(ExperimentConfig(functional="gaussian", m_list=[25], n_list=[4]))
    cell = table.cell(25, 4)
    assert cell.failure is None and cell.error > 1 and cell.gramian_cond > 1e10


def test_failed_cell_recorded_as_na(monkeypatch):
    real = lab.offline

    def failing(mesh, f, sensors, *a, **k):
        if sensors.m == 9:
            raise SolverError("forced breakdown")
        return real(mesh, f, sensors, *a, **k)

    monkeypatch.setattr(lab, "offline", failing)
    table = run_table(ExperimentConfig(functional="point", m_list=[4, 9], n_list=[3], timing=False))
    lines = table.to_csv().splitlines()
    assert lines[2].startswith("3,9,NA(solver: forced breakdown)")
    assert table.cell(4, 3).error is not None


def test_long_run_gate():
    with pytest.raises(ConfigurationError):
        run_table(ExperimentConfig(n_list=[7, 8]))
    assert main(["table", "--n", "8", "--m", "4"]) == EXIT_CONFIG


def test_convergence_csv_and_slopes(tmp_path):
    cfg = ExperimentConfig(experiment="representer_convergence", functional="point", n_list=[3, 4, 5],
                           reference_n=6, out=str(tmp_path / "c.csv"))
    res = run_representer_convergence(cfg)
    assert len(res.h1_errors) == 3 and res.h1_slope is not None
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "n,h1_err_vs_ref,linf_err_vs_ref" and lines[-1].startswith("slope,")
    single = run_representer_convergence(ExperimentConfig(n_list=[4], reference_n=6))
    assert single.h1_slope is None and single.to_csv().splitlines()[-1] == "slope,NA,NA"


def test_fit_slope():
    assert fit_slope([1, 2, 3], [0.5, 0.25, 0.125]) == pytest.approx(1.0)
    assert fit_slope([4], [0.1]) is None


def test_recover_zero_data(capsys):
    assert main(["recover", "--n", "3", "--m", "4", "--data", "0,0,0,0"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["a_hat"] == [0.0] * 4 and report["data_residual"] == 0.0


def test_recover_point_m9_n6():
    report = lab.run_single_recovery(ExperimentConfig(experiment="single_recovery", functional="point", m=9, n=6))
    assert report["h1_error"] == pytest.approx(0.28, rel=0.15)


def test_recover_noise_bound(tmp_path):
    out = tmp_path / "r.json"
    assert main(["recover", "--n", "4", "--m", "9", "--noise", "1e-3", "--seed", "7", "--out", str(out)]) == 0
    noise = json.loads(out.read_text())["noise"]
    assert max(abs(e) for e in noise["eta"]) == pytest.approx(1e-3)
    assert noise["coefficient_change_linf"] <= noise["coefficient_change_bound"]


def test_recover_exit_codes(tmp_path, capsys):
    assert main(["recover", "--n", "3", "--m", "4", "--data", "1,2"]) == EXIT_CONFIG
    sensors = SensorGrid((PointEval((0.4, 0.4)), PointEval((0.4, 0.4))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedGramianWarning)
        singular = offline(build_mesh(3), None, sensors)
    path = write_bundle(singular, tmp_path / "s.hrb")
    assert main(["recover", "--bundle", str(path), "--data", "1,1"]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err
    assert main(["recover", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_bundle_subcommands(tmp_path, capsys):
    path = tmp_path / "b.hrb"
    assert main(["bundle", "write", "--n", "3", "--m", "4", "--functional", "point", "--out", str(path)]) == 0
    capsys.readouterr()
    assert main(["bundle", "read", str(path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["m"] == 4 and summary["n"] == 3
    data = json.dumps([1.0, 2.0, 3.0, 4.0])
    (tmp_path / "w.json").write_text(data)
    assert main(["recover", "--bundle", str(path), "--data", f"@{tmp_path / 'w.json'}"]) == 0
    assert main(["bundle", "write", "--n", "3", "--m", "4"]) == EXIT_CONFIG


def test_table_cli_writes_csv(tmp_path):
    out = tmp_path / "t.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"functional": "point", "m_list": [4], "n_list": [3]}))
    assert main(["table", "--config", str(cfg), "--out", str(out), "--no-timing"]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("3,4,")
