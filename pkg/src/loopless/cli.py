"""Command-line experiment runner.

Subcommands: run, sweep-p, compare-all, plotdata, solve-ref.
Exit codes: 0 success, 2 invalid configuration, 3 data error,
4 reference solve failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .diagnostics import ReferenceSolveError
from .harness import (
    ConfigError,
    DataError,
    RunConfig,
    compare_all,
    emit_plotdata,
    run_experiment,
    solve_reference_cli,
    sweep_p,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_REFERENCE = 4


def _parse_synthetic(text: str) -> tuple[int, int, float]:
    try:
        n, d, kappa = text.split(",")
        return int(n), int(d), float(kappa)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected n,d,kappa (e.g. 100,20,100), got {text!r}"
        )


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated seeds, got {text!r}")


def _add_problem_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--data", help="LIBSVM file path")
    parser.add_argument(
        "--synthetic",
        type=_parse_synthetic,
        metavar="N,D,KAPPA",
        help="synthetic ridge instance (seeded by --data-seed)",
    )
    parser.add_argument("--loss", choices=("logistic", "ridge"))
    parser.add_argument("--mu", type=float, help="regularization weight (> 0)")
    parser.add_argument("--normalize", action="store_true", default=None,
                        help="scale rows to unit Euclidean norm before training")
    parser.add_argument("--data-seed", type=int, dest="data_seed",
                        help="seed for synthetic instance generation")
    parser.add_argument("--config", help="JSON file with RunConfig fields "
                        "(explicit flags override it)")
    parser.add_argument("--out", default="traces", help="output directory")


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--alg", choices=("gd", "svrg", "l-svrg", "katyusha",
                                          "l-katyusha"))
    parser.add_argument("--preset", choices=("theory",))
    parser.add_argument("--eta", type=float)
    parser.add_argument("--p", type=float)
    parser.add_argument("--theta1", type=float)
    parser.add_argument("--theta2", type=float)
    parser.add_argument("--m", type=int)
    parser.add_argument("--step-size", type=float, dest="step_size")
    parser.add_argument("--epochs", type=float)
    parser.add_argument("--checkpoint-every", type=float, dest="checkpoint_every")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--diagnostics",
                        choices=("none", "distance", "lyapunov", "lemmas"))
    parser.add_argument("--ref-tolerance", type=float, dest="ref_tolerance")
    parser.add_argument("--ref-max-epochs", type=int, dest="ref_max_epochs")
    parser.add_argument("--tag", help="suffix for the trace file name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopless",
        description="Loopless variance-reduced optimization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="one algorithm, one trace file")
    _add_problem_flags(run_p)
    _add_run_flags(run_p)

    sweep = sub.add_parser(
        "sweep-p", help="L-SVRG vs loopy SVRG over the five-point loop-length grid"
    )
    _add_problem_flags(sweep)
    _add_run_flags(sweep)
    sweep.add_argument("--grid", help="comma-separated loop lengths overriding "
                       "the default kappa grid")

    comp = sub.add_parser(
        "compare-all", help="all algorithms at theory presets over a seed set"
    )
    _add_problem_flags(comp)
    _add_run_flags(comp)
    comp.add_argument("--seeds", type=_parse_seeds, default=[0],
                      metavar="S0,S1,...")
    comp.add_argument("--algs", help="comma-separated algorithm subset")
    comp.add_argument("--thresholds", default="1e-4,1e-8",
                      help="comma-separated dist_sq thresholds")

    plot = sub.add_parser("plotdata", help="merge traces into long-format CSV")
    plot.add_argument("traces", nargs="+", help="trace CSV files")
    plot.add_argument("--metrics", help="comma-separated metric selection")
    plot.add_argument("--out", default="plotdata.csv", help="output CSV path")

    ref = sub.add_parser("solve-ref", help="solve and store a reference solution")
    _add_problem_flags(ref)
    ref.add_argument("--seed", type=int)
    ref.add_argument("--ref-tolerance", type=float, dest="ref_tolerance")
    ref.add_argument("--ref-max-epochs", type=int, dest="ref_max_epochs")

    return parser


_FLAG_TO_FIELD = {
    "alg": "algorithm",
    "data": "dataset_path",
}
_PARAM_FLAGS = ("eta", "p", "theta1", "theta2", "m", "step_size")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    payload: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")

    params = dict(payload.get("params", {}))
    explicit_param = False
    for name in _PARAM_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
            explicit_param = True
    if params:
        payload["params"] = params
    if explicit_param and getattr(args, "preset", None) is None:
        payload.setdefault("preset", None)

    for flag, field in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            payload[field] = value
    for field in (
        "synthetic", "loss", "mu", "normalize", "preset", "epochs",
        "checkpoint_every", "seed", "data_seed", "diagnostics", "tag",
        "ref_tolerance", "ref_max_epochs",
    ):
        value = getattr(args, field, None)
        if value is not None:
            payload[field] = value

    if "algorithm" not in payload:
        payload["algorithm"] = "l-svrg"
    try:
        return RunConfig.from_dict(payload)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            path = run_experiment(config_from_args(args).validate(), args.out)
            print(path)
        elif args.command == "sweep-p":
            grid = None
            if args.grid:
                grid = [int(x) for x in args.grid.split(",")]
            for path in sweep_p(config_from_args(args).validate(), args.out, grid=grid):
                print(path)
        elif args.command == "compare-all":
            algorithms = args.algs.split(",") if args.algs else None
            thresholds = tuple(float(t) for t in args.thresholds.split(","))
            path = compare_all(
                config_from_args(args).validate(),
                args.out,
                seeds=args.seeds,
                algorithms=algorithms,
                thresholds=thresholds,
            )
            print(path)
        elif args.command == "plotdata":
            metrics = args.metrics.split(",") if args.metrics is not None else None
            if args.metrics == "":
                metrics = []
            path = emit_plotdata(args.traces, args.out, metrics=metrics)
            print(path)
        elif args.command == "solve-ref":
            path = solve_reference_cli(config_from_args(args).validate(), args.out)
            print(path)
        else:  # pragma: no cover - argparse enforces the choices
            return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ReferenceSolveError as exc:
        print(f"reference solve failed: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
