"""Experiment runner: configs, trace CSVs with JSON sidecars, sweeps.

Traces are written one CSV per run (RFC-4180, fixed column order per config)
plus a sidecar JSON holding every resolved parameter, so each curve is fully
reproducible from its sidecar.  The epoch column counts oracle work in units
of n stochastic gradients; the distance column tracks x for the SVRG family
and gradient descent, y for the Katyusha family.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import diagnostics, optimizers
from .data import load_libsvm, normalize_rows, synthesize_quadratic
from .diagnostics import ReferenceSolution, compute_phi, compute_psi, verify_lemma_bounds
from .oracle import Oracle, make_oracle
from .optimizers import ALGORITHMS, THEORY_PARAMS, TraceRecord, run
from .rng import SplitMix64


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


class DataError(RuntimeError):
    """Dataset could not be read or parsed (CLI exit code 3)."""


_SVRG_FAMILY = ("svrg", "l-svrg")
_KATYUSHA_FAMILY = ("katyusha", "l-katyusha")
_DIAGNOSTIC_LEVELS = ("none", "distance", "lyapunov", "lemmas")
_PARAM_KEYS = ("eta", "p", "theta1", "theta2", "m", "step_size")


@dataclass
class RunConfig:
    """Everything one run needs; see README for the CLI flag mapping."""

    algorithm: str
    dataset_path: str | None = None
    synthetic: tuple[int, int, float] | None = None  # (n, d, condition number)
    loss: str = "logistic"
    mu: float = 0.1
    params: dict = field(default_factory=dict)  # explicit values, or empty
    preset: str | None = "theory"
    epochs: float = 20.0
    checkpoint_every: float = 1.0
    seed: int = 0
    data_seed: int = 0  # synthetic instances depend on this, not on seed
    diagnostics: str = "distance"
    normalize: bool = False
    x0: list | None = None
    tag: str = ""
    ref_tolerance: float | None = None
    ref_max_epochs: int = 100_000

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; expected one of "
                f"{sorted(ALGORITHMS)}"
            )
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ConfigError("exactly one of dataset_path or synthetic is required")
        if self.loss not in ("logistic", "ridge"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.mu <= 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.checkpoint_every <= 0:
            raise ConfigError("checkpoint_every must be positive")
        if self.diagnostics not in _DIAGNOSTIC_LEVELS:
            raise ConfigError(
                f"unknown diagnostics level {self.diagnostics!r}; "
                f"expected one of {_DIAGNOSTIC_LEVELS}"
            )
        if self.diagnostics in ("lyapunov", "lemmas") and self.algorithm == "gd":
            raise ConfigError("Lyapunov diagnostics are defined only for the "
                              "SVRG/Katyusha families, not gd")
        if self.preset is None and not self.params:
            raise ConfigError("either a preset or explicit params are required")
        if self.preset is not None and self.preset != "theory":
            raise ConfigError(f"unknown preset {self.preset!r}")
        unknown = set(self.params) - set(_PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown params {sorted(unknown)}")
        return self

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        payload = dict(payload)
        if "synthetic" in payload and payload["synthetic"] is not None:
            n, d, kappa = payload["synthetic"]
            payload["synthetic"] = (int(n), int(d), float(kappa))
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - fields
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**payload)

    def run_id(self) -> str:
        parts = [self.algorithm, self.loss, f"seed{self.seed}"]
        if self.tag:
            parts.append(self.tag)
        return "_".join(parts)


def build_problem(config: RunConfig) -> tuple[Oracle, np.ndarray | None]:
    """Load or synthesize the dataset and construct the oracle.

    Returns the oracle and, for synthetic ridge instances whose mu matches the
    run's mu, the closed-form minimizer (which lets the reference come free).
    """
    minimizer = None
    if config.dataset_path is not None:
        try:
            dataset = load_libsvm(config.dataset_path)
        except OSError as exc:
            raise DataError(f"cannot read {config.dataset_path}: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"cannot parse {config.dataset_path}: {exc}") from exc
    else:
        n, d, kappa = config.synthetic
        dataset, x_star = synthesize_quadratic(
            n, d, kappa, seed=config.data_seed, mu=config.mu
        )
        if config.loss == "ridge" and not config.normalize:
            minimizer = x_star
    if config.normalize:
        dataset = normalize_rows(dataset)
    oracle = make_oracle(dataset, config.loss, config.mu)
    return oracle, minimizer


def resolve_params(config: RunConfig, oracle: Oracle) -> dict:
    """Merge the preset with explicit overrides into constructor kwargs."""
    params = dict(THEORY_PARAMS[config.algorithm](oracle)) if config.preset else {}
    params.update(config.params)
    expected = {
        "gd": {"step_size"},
        "svrg": {"eta", "m"},
        "l-svrg": {"eta", "p"},
        "katyusha": {"theta1", "theta2", "m"},
        "l-katyusha": {"theta1", "theta2", "p"},
    }[config.algorithm]
    missing = expected - set(params)
    if missing:
        raise ConfigError(
            f"{config.algorithm} needs params {sorted(missing)} "
            "(pass them explicitly or use --preset theory)"
        )
    extra = set(params) - expected
    if extra:
        raise ConfigError(f"params {sorted(extra)} do not apply to {config.algorithm}")
    if "m" in params:
        params["m"] = int(params["m"])
    return params


def build_reference(config: RunConfig, oracle: Oracle, minimizer) -> ReferenceSolution | None:
    if config.diagnostics == "none":
        return None
    if minimizer is not None:
        return ReferenceSolution.from_point(oracle, minimizer)
    return diagnostics.solve_reference(
        oracle, tolerance=config.ref_tolerance, max_epochs=config.ref_max_epochs
    )


def make_optimizer(config: RunConfig, oracle: Oracle, params: dict):
    x0 = np.zeros(oracle.d) if config.x0 is None else np.asarray(config.x0, float)
    if x0.shape != (oracle.d,):
        raise ConfigError(f"x0 has shape {x0.shape}, expected ({oracle.d},)")
    return ALGORITHMS[config.algorithm](oracle, x0, **params)


def build_metrics(config: RunConfig, oracle: Oracle, ref: ReferenceSolution | None):
    level = config.diagnostics
    svrg_family = config.algorithm in _SVRG_FAMILY

    def metrics(opt) -> dict:
        out = {}
        if ref is None:
            return out
        delta = opt.tracked_point - ref.x_star
        out["dist_sq"] = float(delta @ delta)
        out["f_gap"] = oracle.full_loss(opt.tracked_point) - ref.f_star
        if level in ("lyapunov", "lemmas"):
            out["lyapunov"] = (
                compute_phi(opt, ref, oracle)
                if svrg_family
                else compute_psi(opt, ref, oracle)
            )
        if level == "lemmas":
            slacks = verify_lemma_bounds(opt, ref, oracle)
            out["lemma_slacks"] = {name: s.rel_slack for name, s in slacks.items()}
        return out

    return metrics


def _lyapunov_columns(config: RunConfig) -> list[str]:
    if config.diagnostics not in ("lyapunov", "lemmas"):
        return []
    return ["phi", "dk"] if config.algorithm in _SVRG_FAMILY else ["psi", "zk", "yk", "wk"]


def _lemma_columns(config: RunConfig) -> list[str]:
    if config.diagnostics != "lemmas":
        return []
    if config.algorithm in _SVRG_FAMILY:
        names = ["iterate_distance", "estimator_second_moment",
                 "grad_learning_decay", "phi_contraction"]
    else:
        names = ["estimator_variance", "z_update", "y_progress",
                 "reference_recursion", "psi_contraction"]
    return [f"slack_{name}" for name in names]


def trace_columns(config: RunConfig) -> list[str]:
    cols = ["k", "oracle_calls", "epoch"]
    if config.diagnostics != "none":
        cols += ["dist_sq", "f_gap"]
    cols += _lyapunov_columns(config)
    cols += _lemma_columns(config)
    cols.append("wall_ns")
    return cols


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        # plain-float repr is the shortest exact round-trip form (and avoids
        # the np.float64(...) wrapper for numpy scalars)
        return repr(float(value))
    return str(value)


def _record_row(rec: TraceRecord, columns: list[str]) -> list[str]:
    values: dict[str, object] = {
        "k": rec.k,
        "oracle_calls": rec.oracle_calls,
        "epoch": rec.epoch,
        "dist_sq": rec.dist_sq,
        "f_gap": rec.f_gap,
        "wall_ns": rec.wall_ns,
    }
    lyap = rec.lyapunov
    if lyap is not None:
        for name in ("phi", "dk", "psi", "zk", "yk", "wk"):
            values[name] = getattr(lyap, name)
    if rec.lemma_slacks:
        for name, slack in rec.lemma_slacks.items():
            values[f"slack_{name}"] = slack
    return [_fmt(values.get(col)) for col in columns]


def write_trace(records: list[TraceRecord], columns: list[str], path: Path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in records:
            writer.writerow(_record_row(rec, columns))


def run_experiment(config: RunConfig, out_dir) -> Path:
    """Execute one configured run; write <run_id>.csv and <run_id>.json.

    Returns the CSV path.  The sidecar carries every resolved parameter
    (step sizes, probabilities, L, mu, kappa, predicted contraction rate,
    reference quality) exactly as used, so traces are reproducible.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    oracle, minimizer = build_problem(config)
    params = resolve_params(config, oracle)
    ref = build_reference(config, oracle, minimizer)
    optimizer = make_optimizer(config, oracle, params)
    rng = SplitMix64(config.seed)
    records = run(
        optimizer,
        rng,
        epochs=config.epochs,
        checkpoint_every=config.checkpoint_every,
        metrics=build_metrics(config, oracle, ref),
    )

    columns = trace_columns(config)
    csv_path = out_dir / f"{config.run_id()}.csv"
    write_trace(records, columns, csv_path)

    sidecar = {
        "run_id": config.run_id(),
        "algorithm": config.algorithm,
        "loss": config.loss,
        "mu": oracle.mu,
        "L": oracle.L,
        "kappa": oracle.L / oracle.mu,
        "n": oracle.n,
        "d": oracle.d,
        "seed": config.seed,
        "epochs": config.epochs,
        "checkpoint_every": config.checkpoint_every,
        "diagnostics": config.diagnostics,
        "params": params,
        "dataset": config.dataset_path or f"synthetic{config.synthetic}",
        "normalize": config.normalize,
        "x0": "origin" if config.x0 is None else list(map(float, config.x0)),
    }
    if config.algorithm in _SVRG_FAMILY:
        p_eff = params.get("p", 1.0 / params["m"] if "m" in params else None)
        sidecar["predicted_rate"] = optimizers.lsvrg_predicted_rate(
            params["eta"], oracle.mu, p_eff
        )
    elif config.algorithm in _KATYUSHA_FAMILY:
        sidecar["predicted_rate"] = optimizers.lkatyusha_predicted_rate(
            oracle.mu / oracle.L, params["theta1"], oracle.n
        )
        sidecar["sigma"] = oracle.mu / oracle.L
        sidecar["eta"] = optimizer.eta
    if ref is not None:
        sidecar["reference"] = {
            "grad_norm": ref.grad_norm,
            "f_star": ref.f_star,
            "tolerance": ref.tolerance,
        }
    with open(out_dir / f"{config.run_id()}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return csv_path


def normalize_grid(values) -> list[int]:
    """Round loop lengths to integers, clamp to >= 1 (with a warning), and
    deduplicate preserving order."""
    out: list[int] = []
    for value in values:
        ell = int(round(value))
        if ell < 1:
            warnings.warn(f"grid loop length {value:.3g} clamped to 1")
            ell = 1
        if ell not in out:
            out.append(ell)
    return out


def probability_grid(n: int, kappa: float) -> list[int]:
    """The five loop lengths n, (k n^3)^(1/4), (k n)^(1/2), (k^3 n)^(1/4), k,
    log-uniform between n and kappa."""
    return normalize_grid(
        [
            float(n),
            (kappa * n**3) ** 0.25,
            (kappa * n) ** 0.5,
            (kappa**3 * n) ** 0.25,
            float(kappa),
        ]
    )


def sweep_p(base_config: RunConfig, out_dir, grid: list[int] | None = None) -> list[Path]:
    """Figure-3 protocol: L-SVRG with p = 1/l and loopy SVRG with m = l for
    every loop length l in the grid (default: the five-point kappa grid)."""
    base_config.validate()
    oracle, _ = build_problem(base_config)
    if grid is None:
        grid = probability_grid(oracle.n, oracle.L / oracle.mu)
    else:
        grid = normalize_grid(grid)
    eta = 1.0 / (6.0 * oracle.L)
    paths = []
    for ell in grid:
        for algorithm, params in (
            ("l-svrg", {"eta": eta, "p": 1.0 / ell}),
            ("svrg", {"eta": eta, "m": ell}),
        ):
            config = RunConfig(
                **{
                    **asdict(base_config),
                    "algorithm": algorithm,
                    "params": params,
                    "preset": None,
                    "tag": f"loop{ell}",
                }
            )
            paths.append(run_experiment(config, out_dir))
    return paths


def epochs_to_threshold(records_or_rows, threshold: float) -> float:
    """First checkpoint epoch with dist_sq <= threshold, or inf."""
    for epoch, dist_sq in records_or_rows:
        if dist_sq is not None and dist_sq <= threshold:
            return epoch
    return float("inf")


def compare_all(
    base_config: RunConfig,
    out_dir,
    seeds: list[int],
    algorithms: list[str] | None = None,
    thresholds: tuple[float, ...] = (1e-4, 1e-8),
) -> Path:
    """Run every algorithm at its theory preset over a shared seed set and
    summarize epochs-to-threshold (on dist_sq) per (algorithm, seed, threshold)."""
    base_config.validate()
    if base_config.diagnostics == "none":
        raise ConfigError("compare-all needs distance diagnostics to measure thresholds")
    algorithms = list(algorithms) if algorithms else list(ALGORITHMS)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for algorithm in algorithms:
        for seed in seeds:
            config = RunConfig(
                **{
                    **asdict(base_config),
                    "algorithm": algorithm,
                    "params": {},
                    "preset": "theory",
                    "seed": seed,
                    "diagnostics": base_config.diagnostics,
                }
            )
            csv_path = run_experiment(config, out_dir)
            trace = read_trace(csv_path)
            pairs = [(row["epoch"], row.get("dist_sq")) for row in trace]
            for threshold in thresholds:
                rows.append(
                    {
                        "algorithm": algorithm,
                        "seed": seed,
                        "threshold": threshold,
                        "epochs_to_threshold": epochs_to_threshold(pairs, threshold),
                    }
                )

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "seed", "threshold", "epochs_to_threshold"])
        for row in rows:
            writer.writerow(
                [
                    row["algorithm"],
                    row["seed"],
                    _fmt(row["threshold"]),
                    _fmt(row["epochs_to_threshold"]),
                ]
            )
    return summary_path


def read_trace(path) -> list[dict]:
    """Load a trace CSV back into a list of {column: float|int|None} dicts."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty trace file")
        for row in reader:
            parsed = {}
            for key, value in row.items():
                if value == "" or value is None:
                    parsed[key] = None
                elif key in ("k", "oracle_calls", "wall_ns"):
                    parsed[key] = int(value)
                else:
                    parsed[key] = float(value)
            out.append(parsed)
    return out


_CORE_COLUMNS = {"k", "oracle_calls", "epoch", "wall_ns"}


def emit_plotdata(trace_paths, out_path, metrics: list[str] | None = None) -> Path:
    """Concatenate traces into one long-format CSV
    (run_id, algorithm, epoch, metric, value) for external plotting tools.

    Each trace needs its JSON sidecar next to it.  metrics=None takes every
    non-core column; an explicitly empty selection is an error.
    """
    trace_paths = [Path(p) for p in trace_paths]
    if not trace_paths:
        raise ConfigError("plotdata needs at least one trace file")
    if metrics is not None and not metrics:
        raise ConfigError("empty metric selection")

    rows = []
    shared_schema: set[str] | None = None
    for path in trace_paths:
        sidecar_path = path.with_suffix(".json")
        if not sidecar_path.exists():
            raise DataError(f"missing sidecar {sidecar_path}")
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        trace = read_trace(path)
        if not trace:
            raise DataError(f"{path}: no records")
        available = [c for c in trace[0] if c not in _CORE_COLUMNS]
        if metrics is None:
            if shared_schema is None:
                shared_schema = set(available)
            elif shared_schema != set(available):
                raise DataError(
                    f"{path}: schema mismatch, columns {sorted(available)} vs "
                    f"{sorted(shared_schema)}"
                )
        wanted = metrics if metrics is not None else available
        missing = set(wanted) - set(trace[0])
        if missing:
            raise DataError(f"{path}: missing metric columns {sorted(missing)}")
        for record in trace:
            for metric in wanted:
                if record[metric] is None:
                    continue
                rows.append(
                    (sidecar["run_id"], sidecar["algorithm"], record["epoch"], metric,
                     record[metric])
                )

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "algorithm", "epoch", "metric", "value"])
        for run_id, algorithm, epoch, metric, value in rows:
            writer.writerow([run_id, algorithm, _fmt(epoch), metric, _fmt(value)])
    return out_path


def solve_reference_cli(config: RunConfig, out_dir) -> Path:
    """Standalone reference solve; writes <run_id>_ref.npz and a JSON summary."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    oracle, minimizer = build_problem(config)
    if minimizer is not None:
        ref = ReferenceSolution.from_point(oracle, minimizer)
    else:
        ref = diagnostics.solve_reference(
            oracle, tolerance=config.ref_tolerance, max_epochs=config.ref_max_epochs
        )
    stem = f"{config.loss}_mu{config.mu}_seed{config.seed}_ref"
    npz_path = out_dir / f"{stem}.npz"
    np.savez(npz_path, x_star=ref.x_star, f_star=ref.f_star, grad_norm=ref.grad_norm)
    with open(out_dir / f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "f_star": ref.f_star,
                "grad_norm": ref.grad_norm,
                "tolerance": ref.tolerance,
                "n": oracle.n,
                "d": oracle.d,
                "L": oracle.L,
                "mu": oracle.mu,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return npz_path
