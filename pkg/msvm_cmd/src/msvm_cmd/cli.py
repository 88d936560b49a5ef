"""Command-line interface: msvm2 {train,predict,evaluate,loo,bound,select}."""
import argparse
import datetime
import logging
import sys
from pathlib import Path

import numpy as np

import msvm_core as core
from msvm_core.dataset import Dataset, DatasetFormatError, FORMATS, parse_dataset
from msvm_core.geometry import BallSettings, MarginError
from msvm_core.kernels import KernelError, NotPSDError
from msvm_core.model import DUMMY_NAME, TIE_TOLERANCE, TrainingError, predict_labels, train
from msvm_core.qp import ConvergenceError, SolverSettings
from msvm_core.selection import (
    SelectionError,
    exact_loo,
    grid_select,
    radius_margin_bound,
)
from msvm_core.serialization import (
    ModelFormatError,
    format_bound_report,
    format_selection_report,
    load_model,
    save_model,
    write_report,
)


LOGGER = logging.getLogger("msvm2")

DEFAULT_CONFIG = Path(__file__).resolve().parents[2] / "config" / "defaults.yaml"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

NUMERICAL_ERRORS = (ConvergenceError, NotPSDError, MarginError, SelectionError)
USAGE_ERRORS = (
    DatasetFormatError,
    ModelFormatError,
    KernelError,
    TrainingError,
    ValueError,
    OSError,
)


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def basic_arg_parser(parser=None):
    if parser is None:
        parser = ArgumentParser()
    parser.add_argument("--config", help="Path to configuration file.")
    parser.add_argument(
        "--log",
        nargs="?",
        default=None,
        const="",
        help="Log data. Optionally specify prefix for log directoy.",
    )
    parser.add_argument("--verbose", action="store_true", help="Print debug output.")
    return parser


def add_solver_arguments(parser):
    parser.add_argument("--tol", type=float, help="KKT tolerance of the dual solver.")
    parser.add_argument("--max-iter", type=int, help="Iteration limit of the dual solver.")
    return parser


def add_data_arguments(parser, required=True):
    parser.add_argument("--data", required=required, help="Dataset file.")
    parser.add_argument(
        "--format",
        choices=FORMATS,
        help="Dataset format (default: csv for .csv files, sparse otherwise).",
    )
    parser.add_argument(
        "--n-features", type=int, help="Dimension of sparse data (default: largest index)."
    )
    return parser


def add_machine_arguments(parser):
    parser.add_argument(
        "--kernel",
        default="linear",
        help="linear | rbf,gamma=G | poly,degree=D,scale=A,offset=B",
    )
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--c", type=float, help="Soft margin parameter of the M-SVM².")
    group.add_argument("--hard", action="store_true", help="Train the hard margin machine.")
    return parser


def add_workers_argument(parser):
    parser.add_argument(
        "--workers", type=int, default=None, help="Parallel jobs (default: sequential)."
    )
    return parser


def load_settings(args):
    """Merge defaults, --config and explicit flags into a config dict."""
    config = {}
    if DEFAULT_CONFIG.exists():
        config = core.parsing.load_config(DEFAULT_CONFIG)
    if args.config is not None:
        config = core.parsing.recursive_dict_update(
            config, core.parsing.load_config(args.config)
        )

    solver = config.setdefault("solver", {})
    if getattr(args, "tol", None) is not None:
        solver["tol"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        solver["max_iter"] = args.max_iter
    LOGGER.debug("configuration: %s", config)
    return config


def solver_settings(config):
    return SolverSettings.from_config(config.get("solver", {}))


def ball_settings(config):
    return BallSettings.from_config(config.get("ball", {}))


def data_logger(args, config):
    if args.log is None:
        return None
    return core.logging.DataLogger(config)


def save_log(logger, args):
    if logger is not None:
        logger.save(datetime.datetime.now(), name=args.log)


def read_dataset(args):
    return parse_dataset(args.data, format=args.format, n_features=args.n_features)


def machine_kwargs(args):
    kernel = core.parsing.parse_kernel_string(args.kernel)
    if args.hard:
        return {"kernel": kernel, "hard_margin": True}
    return {"kernel": kernel, "C": args.c}


def model_dataset(model):
    """The training set stored in a model."""
    return Dataset(model.points, model.labels, model.category_map)


def cmd_train(args):
    config = load_settings(args)
    logger = data_logger(args, config)
    dataset = read_dataset(args)
    model = train(
        dataset,
        settings=solver_settings(config),
        data_logger=logger,
        tie_tol=core.parsing.parse_number(config.get("model", {}).get("tie_tol", TIE_TOLERANCE)),
        **machine_kwargs(args),
    )
    save_model(model, args.out)

    print(f"trained on {dataset.m} points, {dataset.Q} categories")
    print(f"iterations     {model.solver['iterations']} ({model.solver['status']})")
    print(f"kkt residual   {model.solver['kkt_residual']:.3e}")
    print(f"dual objective {model.solver['objective']:.17g}")
    print(f"saved model to {args.out}")
    save_log(logger, args)
    return EXIT_OK


def _predictions(model, dataset):
    if dataset.n_features != model.n_features:
        raise DatasetFormatError(
            f"data has dimension {dataset.n_features}, model expects {model.n_features}"
        )
    labels, _ = predict_labels(model, dataset.points)
    return [model.label_name(y) for y in labels]


def cmd_predict(args):
    model = load_model(args.model)
    dataset = read_dataset(args)
    names = _predictions(model, dataset)
    text = "\n".join(names) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as f:
            f.write(text)
    return EXIT_OK


def cmd_evaluate(args):
    model = load_model(args.model)
    dataset = read_dataset(args)
    names = _predictions(model, dataset)
    truth = dataset.external_labels()

    errors = sum(p != t for p, t in zip(names, truth))
    dummies = sum(p == DUMMY_NAME for p in names)
    print(f"points   {dataset.m}")
    print(f"errors   {errors} ({errors / dataset.m:.4f})")
    print(f"dummy    {dummies}")
    return EXIT_OK


def cmd_loo(args):
    config = load_settings(args)
    dataset = read_dataset(args)
    loo = exact_loo(
        dataset, settings=solver_settings(config), workers=args.workers, **machine_kwargs(args)
    )
    print(f"dataset  {dataset.source_hash}")
    print(f"points   {dataset.m}")
    print(f"errors   {loo.errors}")
    print(f"failed   {loo.failures}")
    return EXIT_OK


def cmd_bound(args):
    config = load_settings(args)
    model = load_model(args.model)

    loo = None
    if args.with_loo:
        # folds retrain with the model's own hyperparameters
        kwargs = {"kernel": model.kernel.with_diagonal_offset(0.0), "C": model.C}
        if model.C is None:
            kwargs = {"kernel": model.kernel, "hard_margin": True}
        loo = exact_loo(
            model_dataset(model),
            settings=solver_settings(config),
            workers=args.workers,
            **kwargs,
        )

    report = radius_margin_bound(
        model, loo=loo, ball_settings=ball_settings(config), support_only=args.support_only
    )
    lines = format_bound_report(report)
    if args.report is not None:
        write_report(args.report, lines, report.to_dict())
    print("\n".join(lines))
    return EXIT_OK


def cmd_select(args):
    config = load_settings(args)
    logger = data_logger(args, config)
    dataset = read_dataset(args)

    C_grid = core.parsing.parse_grid(args.c_grid)
    param_grid = core.parsing.parse_param_grid(args.param_grid)
    if not C_grid:
        raise ValueError("empty C grid")

    result = grid_select(
        dataset,
        args.kernel_family,
        C_grid,
        param_grid,
        with_loo=args.with_loo,
        settings=solver_settings(config),
        ball_settings=ball_settings(config),
        workers=args.workers,
        data_logger=logger,
    )
    lines = format_selection_report(result, timing=args.timing)
    if args.report is not None:
        write_report(args.report, lines, result.to_dict(timing=args.timing))
    print("\n".join(lines))
    save_log(logger, args)
    return EXIT_OK


def build_parser():
    parser = ArgumentParser(prog="msvm2", description="M-SVM² training and model selection.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("train", help="Train a model.")
    basic_arg_parser(p)
    add_data_arguments(p)
    add_machine_arguments(p)
    add_solver_arguments(p)
    p.add_argument("--out", required=True, help="Model file to write.")
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser("predict", help="Predict the labels of a dataset.")
    basic_arg_parser(p)
    p.add_argument("--model", required=True, help="Model file.")
    add_data_arguments(p)
    p.add_argument("--out", help="Prediction file (default: standard output).")
    p.set_defaults(func=cmd_predict)

    p = subparsers.add_parser("evaluate", help="Error rate of a model on a dataset.")
    basic_arg_parser(p)
    p.add_argument("--model", required=True, help="Model file.")
    add_data_arguments(p)
    p.set_defaults(func=cmd_evaluate)

    p = subparsers.add_parser("loo", help="Exact leave-one-out error count.")
    basic_arg_parser(p)
    add_data_arguments(p)
    add_machine_arguments(p)
    add_solver_arguments(p)
    add_workers_argument(p)
    p.set_defaults(func=cmd_loo)

    p = subparsers.add_parser("bound", help="Radius-margin bound of a model.")
    basic_arg_parser(p)
    p.add_argument("--model", required=True, help="Model file.")
    p.add_argument("--with-loo", action="store_true", help="Also run exact leave-one-out.")
    p.add_argument(
        "--support-only", action="store_true", help="Enclose the support vectors only."
    )
    p.add_argument("--report", help="Report file (a YAML copy is written next to it).")
    add_solver_arguments(p)
    add_workers_argument(p)
    p.set_defaults(func=cmd_bound)

    p = subparsers.add_parser("select", help="Grid search driven by the bound.")
    basic_arg_parser(p)
    add_data_arguments(p)
    p.add_argument(
        "--kernel-family", default="linear", help="linear, rbf or poly."
    )
    p.add_argument(
        "--c-grid", required=True, help="Values of C, e.g. '0.1,1,10' or '0.01:100:5'."
    )
    p.add_argument(
        "--param-grid", help="Kernel parameters, e.g. 'gamma=0.1;gamma=1' or 'gamma=0.01:1:3'."
    )
    p.add_argument("--with-loo", action="store_true", help="Also run exact leave-one-out.")
    p.add_argument("--report", help="Report file (a YAML copy is written next to it).")
    p.add_argument("--timing", action="store_true", help="Report wall time per grid point.")
    add_solver_arguments(p)
    add_workers_argument(p)
    p.set_defaults(func=cmd_select)

    return parser


def main(argv=None):
    np.set_printoptions(suppress=True)

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except NUMERICAL_ERRORS as e:
        print(f"msvm2: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except USAGE_ERRORS as e:
        print(f"msvm2: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
