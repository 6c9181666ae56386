import csv
import json
import warnings

import numpy as np
import pytest

from loopless.harness import (
    ConfigError,
    DataError,
    RunConfig,
    build_problem,
    compare_all,
    emit_plotdata,
    epochs_to_threshold,
    normalize_grid,
    probability_grid,
    read_trace,
    resolve_params,
    run_experiment,
    sweep_p,
    trace_columns,
)


def synthetic_config(**overrides):
    base = dict(
        algorithm="l-svrg",
        synthetic=(10, 4, 25.0),
        loss="ridge",
        mu=1.0,
        epochs=5.0,
        seed=0,
    )
    base.update(overrides)
    return RunConfig(**base)


def read_csv_lines(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def strip_wall(lines):
    # wall_ns is always the last column
    return [",".join(line.split(",")[:-1]) for line in lines]


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize(
    "overrides, pattern",
    [
        (dict(algorithm="sgd"), "unknown algorithm"),
        (dict(synthetic=None), "exactly one of"),
        (dict(dataset_path="x.svm"), "exactly one of"),
        (dict(loss="hinge"), "unknown loss"),
        (dict(mu=0.0), "mu must be positive"),
        (dict(epochs=0.0), "epochs must be positive"),
        (dict(checkpoint_every=0.0), "checkpoint_every"),
        (dict(diagnostics="everything"), "unknown diagnostics"),
        (dict(algorithm="gd", diagnostics="lyapunov"), "Lyapunov diagnostics"),
        (dict(preset="magic"), "unknown preset"),
        (dict(preset=None), "either a preset"),
        (dict(params={"alpha": 1.0}), "unknown params"),
    ],
)
def test_config_validation_errors(overrides, pattern):
    with pytest.raises(ConfigError, match=pattern):
        synthetic_config(**overrides).validate()


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"algorithm": "gd", "synthetic": (1, 1, 1), "foo": 2})


def test_resolve_params_theory_values():
    config = synthetic_config()
    oracle, _ = build_problem(config)
    params = resolve_params(config, oracle)
    assert params == {"eta": 1.0 / (6.0 * oracle.L), "p": 1.0 / oracle.n}

    katyusha = synthetic_config(algorithm="l-katyusha")
    kp = resolve_params(katyusha, oracle)
    sigma = oracle.mu / oracle.L
    assert kp["theta1"] == min(np.sqrt(2 * sigma * oracle.n / 3), 0.5)
    assert kp["theta2"] == 0.5 and kp["p"] == 1.0 / oracle.n


def test_resolve_params_explicit_override_and_errors():
    config = synthetic_config(params={"eta": 0.01, "p": 0.2}, preset=None)
    oracle, _ = build_problem(config)
    assert resolve_params(config, oracle) == {"eta": 0.01, "p": 0.2}

    partial = synthetic_config(params={"eta": 0.01}, preset=None)
    with pytest.raises(ConfigError, match="needs params"):
        resolve_params(partial, oracle)

    mixed = synthetic_config(params={"eta": 0.01, "p": 0.2, "m": 3}, preset=None)
    with pytest.raises(ConfigError, match="do not apply"):
        resolve_params(mixed, oracle)


# ------------------------------------------------------------------- running


def test_run_experiment_writes_trace_and_sidecar(tmp_path):
    config = synthetic_config(diagnostics="lyapunov")
    csv_path = run_experiment(config, tmp_path)
    assert csv_path.exists()
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    assert sidecar["algorithm"] == "l-svrg"
    assert sidecar["kappa"] == pytest.approx(25.0, rel=1e-12)
    # resolved parameters satisfy the constructor relations bit-exactly
    assert sidecar["params"]["eta"] == 1.0 / (6.0 * sidecar["L"])
    assert sidecar["params"]["p"] == 1.0 / sidecar["n"]
    assert 0.0 < sidecar["predicted_rate"] < 1.0
    assert sidecar["reference"]["grad_norm"] <= sidecar["reference"]["tolerance"]

    trace = read_trace(csv_path)
    assert trace[0]["epoch"] == 1.0
    epochs = [row["epoch"] for row in trace]
    assert epochs == sorted(epochs)
    assert all(row["phi"] >= row["dist_sq"] >= 0.0 for row in trace)
    # the Lyapunov value decays substantially over 5 epochs on a tame problem
    assert trace[-1]["phi"] < trace[0]["phi"]


def test_katyusha_sidecar_eta_identity(tmp_path):
    config = synthetic_config(algorithm="l-katyusha")
    csv_path = run_experiment(config, tmp_path)
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    t1 = sidecar["params"]["theta1"]
    t2 = sidecar["params"]["theta2"]
    assert sidecar["eta"] == t2 / ((1.0 + t2) * t1)
    assert sidecar["sigma"] == sidecar["mu"] / sidecar["L"]


def test_trace_columns_by_diagnostics_level():
    assert trace_columns(synthetic_config(diagnostics="none")) == [
        "k", "oracle_calls", "epoch", "wall_ns",
    ]
    assert trace_columns(synthetic_config(diagnostics="distance")) == [
        "k", "oracle_calls", "epoch", "dist_sq", "f_gap", "wall_ns",
    ]
    assert "phi" in trace_columns(synthetic_config(diagnostics="lyapunov"))
    katyusha = synthetic_config(algorithm="katyusha", diagnostics="lyapunov")
    cols = trace_columns(katyusha)
    assert {"psi", "zk", "yk", "wk"} <= set(cols)
    lemmas = trace_columns(synthetic_config(diagnostics="lemmas"))
    assert "slack_phi_contraction" in lemmas


def test_run_experiment_deterministic_modulo_wall(tmp_path):
    config = synthetic_config(diagnostics="lemmas", epochs=3.0)
    a = run_experiment(config, tmp_path / "a")
    b = run_experiment(config, tmp_path / "b")
    assert strip_wall(read_csv_lines(a)) == strip_wall(read_csv_lines(b))


def test_run_experiment_none_diagnostics_has_no_reference(tmp_path):
    config = synthetic_config(diagnostics="none")
    csv_path = run_experiment(config, tmp_path)
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    assert "reference" not in sidecar
    trace = read_trace(csv_path)
    assert "dist_sq" not in trace[0]


def test_run_experiment_logistic_solves_reference(tmp_path):
    config = synthetic_config(loss="logistic", mu=0.5, epochs=3.0)
    csv_path = run_experiment(config, tmp_path)
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    assert sidecar["reference"]["grad_norm"] <= sidecar["reference"]["tolerance"]


def test_run_experiment_reads_libsvm_file(tmp_path):
    data = tmp_path / "tiny.svm"
    data.write_text("+1 1:1 2:0.5\n-1 1:-1\n+1 2:2\n", encoding="utf-8")
    config = synthetic_config(
        synthetic=None, dataset_path=str(data), loss="logistic", mu=0.3, epochs=2.0
    )
    csv_path = run_experiment(config, tmp_path / "out")
    assert len(read_trace(csv_path)) >= 2


def test_run_experiment_missing_file_raises_data_error(tmp_path):
    config = synthetic_config(synthetic=None, dataset_path=str(tmp_path / "nope.svm"))
    with pytest.raises(DataError):
        run_experiment(config, tmp_path)


def test_run_experiment_bad_x0_shape(tmp_path):
    config = synthetic_config(x0=[1.0, 2.0])
    with pytest.raises(ConfigError, match="x0"):
        run_experiment(config, tmp_path)


# ---------------------------------------------------------------------- grid


def test_probability_grid_log_uniform_arithmetic():
    grid = probability_grid(100, 1e4)
    assert grid == [100, 316, 1000, 3162, 10000]


def test_probability_grid_collapses_when_kappa_equals_n():
    assert probability_grid(50, 50.0) == [50]


def test_normalize_grid_clamps_with_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert normalize_grid([0.2, 3.6, 3.6]) == [1, 4]
    assert any("clamped" in str(w.message) for w in caught)


def test_sweep_p_writes_pairs(tmp_path):
    config = synthetic_config(epochs=2.0)
    paths = sweep_p(config, tmp_path, grid=[2, 5])
    assert len(paths) == 4
    tags = sorted(p.name for p in paths)
    assert tags == [
        "l-svrg_ridge_seed0_loop2.csv",
        "l-svrg_ridge_seed0_loop5.csv",
        "svrg_ridge_seed0_loop2.csv",
        "svrg_ridge_seed0_loop5.csv",
    ]
    lsvrg_sidecar = json.loads((tmp_path / "l-svrg_ridge_seed0_loop5.json").read_text())
    svrg_sidecar = json.loads((tmp_path / "svrg_ridge_seed0_loop5.json").read_text())
    assert lsvrg_sidecar["params"]["p"] == 0.2
    assert svrg_sidecar["params"]["m"] == 5
    assert lsvrg_sidecar["params"]["eta"] == svrg_sidecar["params"]["eta"]


# ------------------------------------------------------------------- compare


def test_epochs_to_threshold():
    rows = [(1.0, 5.0), (2.0, 0.5), (3.0, 0.01)]
    assert epochs_to_threshold(rows, 0.5) == 2.0
    assert epochs_to_threshold(rows, 1e-9) == float("inf")
    assert epochs_to_threshold([(1.0, None)], 0.5) == float("inf")


def test_compare_all_summary(tmp_path):
    config = synthetic_config(epochs=15.0)
    summary = compare_all(
        config,
        tmp_path,
        seeds=[0, 1],
        algorithms=["gd", "l-svrg"],
        thresholds=(1e-2, 1e-30),
    )
    with open(summary, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 2 * 2
    assert {r["algorithm"] for r in rows} == {"gd", "l-svrg"}
    # the absurd threshold is never reached within the budget
    unreachable = [r for r in rows if float(r["threshold"]) == 1e-30]
    assert all(r["epochs_to_threshold"] == "inf" for r in unreachable)
    reachable = [r for r in rows if float(r["threshold"]) == 1e-2]
    assert all(r["epochs_to_threshold"] != "inf" for r in reachable)


def test_compare_all_single_algorithm_group(tmp_path):
    config = synthetic_config(epochs=2.0)
    summary = compare_all(config, tmp_path, seeds=[0], algorithms=["gd"],
                          thresholds=(1e-2,))
    with open(summary, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["algorithm"] for r in rows] == ["gd"]


def test_compare_all_requires_distance(tmp_path):
    config = synthetic_config(diagnostics="none")
    with pytest.raises(ConfigError, match="distance"):
        compare_all(config, tmp_path, seeds=[0])


# ------------------------------------------------------------------ plotdata


def test_plotdata_long_format_row_count(tmp_path):
    # 3 checkpoints x 2 metrics -> 6 rows
    config = synthetic_config(epochs=3.0)
    csv_path = run_experiment(config, tmp_path)
    assert len(read_trace(csv_path)) == 3
    out = emit_plotdata([csv_path], tmp_path / "plot.csv",
                        metrics=["dist_sq", "f_gap"])
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {r["metric"] for r in rows} == {"dist_sq", "f_gap"}
    assert all(r["run_id"] == "l-svrg_ridge_seed0" for r in rows)


def test_plotdata_merges_sweep(tmp_path):
    config = synthetic_config(epochs=2.0)
    paths = sweep_p(config, tmp_path, grid=[2, 5])
    out = emit_plotdata(paths, tmp_path / "plot.csv", metrics=["dist_sq"])
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["run_id"] for r in rows} == {
        "l-svrg_ridge_seed0_loop2",
        "l-svrg_ridge_seed0_loop5",
        "svrg_ridge_seed0_loop2",
        "svrg_ridge_seed0_loop5",
    }
    assert {r["algorithm"] for r in rows} == {"l-svrg", "svrg"}


def test_plotdata_rejects_empty_selection_and_missing_inputs(tmp_path):
    config = synthetic_config(epochs=2.0)
    csv_path = run_experiment(config, tmp_path)
    with pytest.raises(ConfigError, match="empty metric"):
        emit_plotdata([csv_path], tmp_path / "plot.csv", metrics=[])
    with pytest.raises(ConfigError, match="at least one"):
        emit_plotdata([], tmp_path / "plot.csv")
    with pytest.raises(DataError, match="missing metric"):
        emit_plotdata([csv_path], tmp_path / "plot.csv", metrics=["psi"])


def test_plotdata_rejects_schema_mismatch(tmp_path):
    a = run_experiment(synthetic_config(epochs=2.0), tmp_path)
    b = run_experiment(
        synthetic_config(epochs=2.0, diagnostics="lyapunov", tag="lyap"), tmp_path
    )
    with pytest.raises(DataError, match="schema mismatch"):
        emit_plotdata([a, b], tmp_path / "plot.csv")


def test_plotdata_requires_sidecar(tmp_path):
    config = synthetic_config(epochs=2.0)
    csv_path = run_experiment(config, tmp_path)
    csv_path.with_suffix(".json").unlink()
    with pytest.raises(DataError, match="sidecar"):
        emit_plotdata([csv_path], tmp_path / "plot.csv")
