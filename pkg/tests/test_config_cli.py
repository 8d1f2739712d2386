import csv
import json
import math

import numpy as np
import pytest

from rkhspi import cli
from rkhspi.cli import main, run_experiment
from rkhspi.config import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    parse_value,
    preset,
)
from rkhspi.rkhs_pi import PIAbort, PIHistory

SMALL_TOY = """
# a tiny toy run
problem.name = toy
kernel.name = gaussian
kernel.gamma_squared = 1.7
train.size = 12        # 12 x 12 grid
greedy.max_centers = 20
pi.max_iters = 2
test.size = 10
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_values():
    assert parse_value(" 3 ") == 3
    assert parse_value("1e-5") == 1e-5
    assert parse_value("True") is True
    assert parse_value("None") is None
    assert parse_value("gaussian-quad") == "gaussian-quad"
    assert parse_value("'quoted'") == "quoted"


def test_parse_config_grammar():
    flat = parse_config(SMALL_TOY + "\ntrain.size = 13\n")
    assert flat["train.size"] == 13
    assert flat["kernel.gamma_squared"] == 1.7
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("problem.name = toy\nthis is not a pair\n")


def test_unknown_keys_and_invalid_values():
    with pytest.raises(ConfigError, match="unknown section"):
        ExperimentConfig.from_mapping({"solver.tol": 1})
    with pytest.raises(ConfigError, match="accepts"):
        ExperimentConfig.from_mapping({"kernel.shape": 1})
    with pytest.raises(ConfigError, match="gaussian"):
        ExperimentConfig.from_mapping({"kernel.name": "cauchy", "kernel.gamma": 1.0})
    bad = [
        {"kernel.gamma": 1.0, "kernel.gamma_squared": 1.0},
        {"kernel.gamma": -1.0},
        {"kernel.gamma": 1.0, "train.size": 0},
        {"kernel.gamma": 1.0, "pi.epsilon": 0},
        {"kernel.gamma": 1.0, "greedy.max_centers": 2.5},
        {"kernel.gamma": 1.0, "verification.mode": "bounds"},
        {"kernel.gamma": 1.0, "verification.mode": "bounds", "verification.alpha": 2, "verification.beta": 1},
        {"kernel.gamma": 1.0, "jitter": -1.0},
        {"kernel.gamma": 1.0, "problem.name": "pendulum"},
        {"kernel.gamma": 1.0, "train.kind": "sobol"},
    ]
    for flat in bad:
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping(flat)


def test_mapping_round_trip_and_overrides():
    cfg = preset("toy")
    again = ExperimentConfig.from_mapping(cfg.to_mapping())
    assert again == cfg
    assert cfg.gamma == pytest.approx(math.sqrt(1.7))
    over = cfg.with_overrides({"kernel.gamma": 2.0})
    assert over.gamma == 2.0 and over.kernel.gamma_squared is None
    assert cfg.with_overrides({"jitter": "none"}).jitter_value == 0.0
    assert cfg.jitter_value == "auto"


def test_preset_shape_parameters():
    assert PRESETS["toy"].gamma == pytest.approx(math.sqrt(1.7))
    assert PRESETS["toy-quad"].kernel.name == "gaussian-quad"
    assert PRESETS["vdp"].gamma == pytest.approx(math.sqrt(1.7))
    assert PRESETS["vdp-quad"].gamma == pytest.approx(math.sqrt(1.1))
    assert PRESETS["heat-linear"].gamma == 5e-8
    assert PRESETS["heat-linear-gauss"].gamma == pytest.approx(math.sqrt(6) * 1e-5)
    assert PRESETS["heat-nonlinear"].gamma == 4e-8
    assert PRESETS["heat-nonlinear-gauss"].gamma == pytest.approx(math.sqrt(6) * 1e-5)
    assert PRESETS["heat-linear"].train.size == 100_000
    with pytest.raises(ConfigError, match="valid options"):
        preset("nope")


def test_run_from_config_file(tmp_path):
    cfg_path = tmp_path / "toy.cfg"
    out = tmp_path / "out"
    cfg_path.write_text(SMALL_TOY + f"output_dir = '{out}'\n")
    assert main(["run", str(cfg_path)]) == 0
    greedy = _rows(out / "greedy.csv")
    assert greedy[0] == ["n_centers", "res_ghjb"]
    assert 1 <= len(greedy) - 1 <= 20
    assert all(float(r[1]) > 0 for r in greedy[1:])
    pi = _rows(out / "pi.csv")
    assert pi[0] == list(cli.PI_COLUMNS)
    assert len(pi) == 3
    assert all(r[4] in ("true", "false") for r in pi[1:])
    centers = _rows(out / "centers.csv")
    assert centers[0] == ["x1", "x2"] and len(centers) == 21
    # 17 significant digits round-trip
    assert float(greedy[1][1]) == float(format(float(greedy[1][1]), ".17g"))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0
    assert manifest["config"] == load_config(cfg_path).to_mapping()
    assert {"library_version", "wall_time_s", "status", "numpy", "python"} <= manifest.keys()


def test_heat_desk_preset_reports_error_pi(tmp_path):
    out = tmp_path / "heat"
    code = main(["preset", "heat-linear-desk", "--out", str(out), "--override", "greedy.max_centers=10"])
    assert code == 0
    pi = _rows(out / "pi.csv")
    assert pi[1][cli.PI_COLUMNS.index("error_pi")] != ""


def test_invalid_kernel_exits_2(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("kernel.name = cauchy\nkernel.gamma = 1.0\n")
    assert main(["run", str(cfg_path)]) == 2
    err = capsys.readouterr().err
    assert "cauchy" in err and "linear-matern" in err


def test_unparseable_and_missing_config(tmp_path):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("garbage\n")
    assert main(["run", str(cfg_path)]) == 2
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    assert main(["preset", "toy", "--override", "noequals"]) == 2


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert main(["preset", "toy", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    args = ["preset", "toy", "--out", str(tmp_path), "--override", "greedy.max_centers=3", "--override", "pi.max_iters=1"]
    assert main(args) == 0


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out


def test_solver_abort_exits_1_and_keeps_partial_output(tmp_path, monkeypatch):
    def abort(*args, **kwargs):
        history = PIHistory()
        history.greedy.n_centers, history.greedy.res_ghjb = [1, 2], [0.5, 0.25]
        raise PIAbort("policy evaluation failed at iteration 1", history)

    monkeypatch.setattr(cli, "run_rkhs_pi", abort)
    cfg = preset("toy").with_overrides({"output_dir": str(tmp_path)})
    assert run_experiment(cfg) == 1
    assert len(_rows(tmp_path / "greedy.csv")) == 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["exit_code"] == 1 and "abort" in manifest["status"]


def test_toy_grid_requires_square_domain():
    cfg = preset("heat-linear-desk").with_overrides({"train.kind": "grid"})
    with pytest.raises(ConfigError):
        cli._training_points(cfg, cli.build_problem(cfg))


def test_initial_policy_option():
    cfg = preset("toy").with_overrides({"problem.initial_policy": "sin-sum"})
    p = cli.build_problem(cfg)
    assert p.metadata["initial_policy"] == "sin-sum"
    x = np.array([[0.2, 0.1]])
    assert p.initial_policy(x)[0, 0] == pytest.approx(-1.5 * np.sin(0.3))
