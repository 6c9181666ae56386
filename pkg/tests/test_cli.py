import csv
import json

import pytest

from loopless.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_REFERENCE, main


def run_cli(*argv):
    return main(list(argv))


def read_lines(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def strip_wall(lines):
    return [",".join(line.split(",")[:-1]) for line in lines]


def test_run_success(tmp_path, capsys):
    code = run_cli(
        "run", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--alg", "l-svrg", "--preset", "theory", "--epochs", "3",
        "--seed", "7", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    printed = capsys.readouterr().out.strip()
    assert printed.endswith("l-svrg_ridge_seed7.csv")
    sidecar = json.loads((tmp_path / "l-svrg_ridge_seed7.json").read_text())
    assert sidecar["seed"] == 7
    assert sidecar["params"]["p"] == 0.1


def test_run_explicit_params_disable_preset(tmp_path):
    code = run_cli(
        "run", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--alg", "l-svrg", "--eta", "0.01", "--p", "0.5",
        "--epochs", "2", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    sidecar = json.loads((tmp_path / "l-svrg_ridge_seed0.json").read_text())
    assert sidecar["params"] == {"eta": 0.01, "p": 0.5}


def test_run_twice_identical_modulo_wall(tmp_path):
    argv = (
        "run", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--alg", "l-katyusha", "--preset", "theory", "--epochs", "4",
        "--seed", "3", "--diagnostics", "lyapunov",
    )
    assert run_cli(*argv, "--out", str(tmp_path / "a")) == EXIT_OK
    assert run_cli(*argv, "--out", str(tmp_path / "b")) == EXIT_OK
    a = read_lines(tmp_path / "a" / "l-katyusha_ridge_seed3.csv")
    b = read_lines(tmp_path / "b" / "l-katyusha_ridge_seed3.csv")
    assert strip_wall(a) == strip_wall(b)
    assert a[0].split(",")[-1] == "wall_ns"


def test_config_error_exit_code(tmp_path):
    code = run_cli(
        "run", "--synthetic", "10,4,25", "--mu", "-1",
        "--alg", "l-svrg", "--out", str(tmp_path),
    )
    assert code == EXIT_CONFIG


def test_missing_data_exit_code(tmp_path):
    code = run_cli(
        "run", "--data", str(tmp_path / "missing.svm"),
        "--alg", "gd", "--out", str(tmp_path),
    )
    assert code == EXIT_DATA


def test_malformed_data_exit_code(tmp_path):
    bad = tmp_path / "bad.svm"
    bad.write_text("+1 2:1 1:3\n", encoding="utf-8")
    code = run_cli("run", "--data", str(bad), "--alg", "gd", "--out", str(tmp_path))
    assert code == EXIT_DATA


def test_reference_failure_exit_code(tmp_path):
    # logistic has no closed form; one epoch of GD cannot hit the tolerance
    code = run_cli(
        "run", "--synthetic", "10,4,25", "--loss", "logistic", "--mu", "0.1",
        "--alg", "l-svrg", "--epochs", "2", "--ref-max-epochs", "1",
        "--ref-tolerance", "1e-14", "--out", str(tmp_path),
    )
    assert code == EXIT_REFERENCE


def test_config_file_with_flag_override(tmp_path):
    config = {
        "algorithm": "l-svrg",
        "synthetic": [10, 4, 25.0],
        "loss": "ridge",
        "mu": 1.0,
        "epochs": 2.0,
        "seed": 5,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    code = run_cli("run", "--config", str(path), "--seed", "9",
                   "--out", str(tmp_path))
    assert code == EXIT_OK
    assert (tmp_path / "l-svrg_ridge_seed9.csv").exists()


def test_invalid_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("not json", encoding="utf-8")
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path)) == EXIT_CONFIG


def test_sweep_p_subcommand(tmp_path):
    code = run_cli(
        "sweep-p", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--epochs", "2", "--grid", "2,5", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    names = sorted(p.name for p in tmp_path.glob("*.csv"))
    assert names == [
        "l-svrg_ridge_seed0_loop2.csv",
        "l-svrg_ridge_seed0_loop5.csv",
        "svrg_ridge_seed0_loop2.csv",
        "svrg_ridge_seed0_loop5.csv",
    ]


def test_compare_all_subcommand(tmp_path):
    code = run_cli(
        "compare-all", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--epochs", "3", "--seeds", "0,1", "--algs", "gd,l-svrg",
        "--thresholds", "1e-2,1e-30", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    with open(tmp_path / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8


def test_plotdata_subcommand(tmp_path):
    assert run_cli(
        "run", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--alg", "l-svrg", "--epochs", "3", "--out", str(tmp_path),
    ) == EXIT_OK
    trace = tmp_path / "l-svrg_ridge_seed0.csv"
    out = tmp_path / "plot.csv"
    assert run_cli(
        "plotdata", str(trace), "--metrics", "dist_sq", "--out", str(out)
    ) == EXIT_OK
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert run_cli("plotdata", str(trace), "--metrics", "", "--out", str(out)) == EXIT_CONFIG


def test_solve_ref_subcommand(tmp_path):
    code = run_cli(
        "solve-ref", "--synthetic", "10,4,25", "--loss", "ridge", "--mu", "1.0",
        "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    npz = list(tmp_path.glob("*_ref.npz"))
    assert len(npz) == 1
    summary = json.loads(npz[0].with_suffix(".json").read_text())
    assert summary["grad_norm"] <= summary["tolerance"]


def test_normalize_flag(tmp_path):
    data = tmp_path / "tiny.svm"
    data.write_text("+1 1:3 2:4\n-1 1:1\n", encoding="utf-8")
    code = run_cli(
        "run", "--data", str(data), "--loss", "logistic", "--mu", "0.5",
        "--alg", "gd", "--epochs", "2", "--normalize", "--out", str(tmp_path),
    )
    assert code == EXIT_OK
    sidecar = json.loads((tmp_path / "gd_logistic_seed0.json").read_text())
    assert sidecar["normalize"] is True
    # unit rows + mu=0.5 -> L = 0.25 + 0.5
    assert sidecar["L"] == pytest.approx(0.75, rel=1e-12)
