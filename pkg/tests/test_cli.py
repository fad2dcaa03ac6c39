import os

import pandas as pd
import pytest

from app.core.dependencies import get_grid, get_run_config
from app.core.exceptions import ConfigError
from main import build_parser, main
from tests.helpers import CONFIG_TEMPLATE, window_lambda


def read_summary(directory):
    with open(os.path.join(directory, "summary.txt")) as handle:
        return dict(line.rstrip("\n").split(" = ", 1) for line in handle if " = " in line)


def test_parser_lists_every_command():
    parser = build_parser()
    for name in ("eigen", "simulate", "twophase", "validate", "sweep"):
        args = parser.parse_args([name, "--config", "run.ini"])
        assert args.command == name
        assert not args.emit_plot_script


def test_missing_parameter_names_the_field(write_config, tmp_path, capsys):
    path = write_config(CONFIG_TEMPLATE.format(level=1.0).replace("c1 = 1.0\n", ""))
    assert main(["eigen", "--config", path, "--out", str(tmp_path / "out")]) == 2
    assert "growth.c1" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "absent.ini")]) == 2
    assert "not found" in capsys.readouterr().err


def test_out_of_range_value_is_a_config_error(write_config):
    path = write_config(CONFIG_TEMPLATE.format(level=-1.0))
    with pytest.raises(ConfigError) as excinfo:
        get_run_config(path)
    assert excinfo.value.detail.startswith("division.level")


def test_overrides_and_output_flags(window_config, tmp_path):
    config = get_run_config(window_config, out=str(tmp_path), threads=2, overrides={("division", "level"): "0.5"})
    assert config.division.level == 0.5
    assert config.output.directory == str(tmp_path)
    assert config.output.threads == 2
    assert config.solver.epsilon_schedule == [1e-3, 1e-4]
    grid = get_grid(config)
    assert (grid.n_x, grid.n_a, grid.a_max) == (33, 81, 4.0)


def test_subcritical_model_exits_with_three(write_config, tmp_path, capsys):
    path = write_config(CONFIG_TEMPLATE.format(level=0.3))
    assert main(["eigen", "--config", path, "--out", str(tmp_path / "out")]) == 3
    assert "growth exponent" in capsys.readouterr().err


def test_eigen_run_writes_tables_and_summary(window_config, tmp_path):
    out = str(tmp_path / "eigen")
    assert main(["eigen", "--config", window_config, "--out", out, "--emit-plot-script"]) == 0
    for name in ("N.csv", "phi.csv", "boundary.csv", "summary.txt", "plot.py"):
        assert os.path.isfile(os.path.join(out, name))
    boundary = pd.read_csv(os.path.join(out, "boundary.csv"))
    assert list(boundary.columns) == ["x", "N0", "phi0"]
    assert len(boundary) == 33
    density = pd.read_csv(os.path.join(out, "N.csv"))
    assert list(density.columns) == ["a", "x", "N"]
    assert len(density) == 33 * 81
    summary = read_summary(out)
    assert float(summary["lambda0"]) == pytest.approx(window_lambda(1.0, 2.0), abs=1e-6)
    assert float(summary["age_only_relative_gap"]) < 1e-5


def test_validate_reports_assumptions(window_config, tmp_path):
    out = str(tmp_path / "validate")
    assert main(["validate", "--config", window_config, "--out", out]) == 0
    summary = read_summary(out)
    assert summary["ln2_passed"] == "true"
    assert summary["kernel_passed"] == "true"
    assert summary["all_passed"] == "true"
    continuity = pd.read_csv(os.path.join(out, "birth_continuity.csv"))
    assert list(continuity.columns) == ["x", "C0"]


def test_sweep_records_failures_per_point(write_config, tmp_path):
    text = CONFIG_TEMPLATE.format(level=1.0) + "\n[sweep]\nkey = division.level\nvalues = 1.0, 0.3\ncommand = eigen\n"
    path = write_config(text)
    out = str(tmp_path / "sweep")
    assert main(["sweep", "--config", path, "--out", out]) == 0
    frame = pd.read_csv(os.path.join(out, "sweep.csv"))
    assert list(frame["exit_code"]) == [0, 3]
    assert frame["lambda0"].iloc[0] == pytest.approx(window_lambda(1.0, 2.0), abs=1e-6)
    assert read_summary(out)["failures"] == "1"


def test_sweep_needs_its_section(window_config, tmp_path):
    assert main(["sweep", "--config", window_config, "--out", str(tmp_path / "sweep")]) == 2


@pytest.mark.slow
def test_simulate_run_writes_observables(write_config, tmp_path):
    text = CONFIG_TEMPLATE.format(level=1.0) + "\n[simulate]\nhorizon = 2\nsnapshot_times = 0, 1\noutput_every = 4\n"
    out = str(tmp_path / "simulate")
    assert main(["simulate", "--config", write_config(text), "--out", out]) == 0
    observables = pd.read_csv(os.path.join(out, "observables.csv"))
    assert list(observables.columns) == ["t", "mass", "duality", "entropy", "distance", "abs_duality", "envelope"]
    assert os.path.isfile(os.path.join(out, "snapshot_0.csv"))
    assert os.path.isfile(os.path.join(out, "snapshot_1.csv"))


@pytest.mark.slow
def test_twophase_run_writes_trajectory(write_config, tmp_path):
    text = CONFIG_TEMPLATE.format(level=1.0) + (
        "\n[twophase]\nd1 = 0.1\ntransition = constant\nl = 0.5\nalpha1 = 8\nk = 1\nhorizon = 4\n"
    )
    out = str(tmp_path / "twophase")
    assert main(["twophase", "--config", write_config(text), "--out", out]) == 0
    trajectory = pd.read_csv(os.path.join(out, "trajectory.csv"))
    assert list(trajectory.columns) == ["t", "N", "P", "Q", "G", "S2", "R"]
    assert read_summary(out)["command"] == "twophase"


def shipped_config(name):
    return os.path.join(os.path.dirname(__file__), os.pardir, "configs", name)


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 2, 3])
def test_growth_experiment_follows_the_power_law(tmp_path, k):
    out = str(tmp_path / f"growth_k{k}")
    assert main(["twophase", "--config", shipped_config(f"growth_k{k}.ini"), "--out", out]) == 0
    trajectory = pd.read_csv(os.path.join(out, "trajectory.csv"))
    assert trajectory["R"].iloc[-1] < trajectory["R"].iloc[0]
    summary = read_summary(out)
    assert summary["regime"] == "polynomial-growth"
    assert float(summary["expected_slope"]) == pytest.approx(1.0 / k)
    assert float(summary["slope_N"]) == pytest.approx(1.0 / k, rel=0.2)


@pytest.mark.slow
def test_decay_experiment_loses_cells(tmp_path):
    out = str(tmp_path / "decay")
    assert main(["twophase", "--config", shipped_config("decay.ini"), "--out", out]) == 0
    summary = read_summary(out)
    assert summary["regime"] == "exponential-decay"
    assert float(summary["N_final"]) < float(summary["N_initial"])


@pytest.mark.slow
def test_window_simulate_config_runs(tmp_path):
    out = str(tmp_path / "window")
    assert main(["simulate", "--config", shipped_config("window_simulate.ini"), "--out", out]) == 0
    summary = read_summary(out)
    assert float(summary["courant"]) <= 1.0
    assert float(summary["duality_drift"]) < 1e-2
    assert summary["distance_halved"] == "true"


@pytest.mark.slow
def test_oracle_grid_is_too_coarse_in_age_for_simulation(tmp_path):
    out = str(tmp_path / "oracle")
    assert main(["simulate", "--config", shipped_config("oracle.ini"), "--out", out]) == 4
