#!/usr/bin/env python3
"""Compare exact leave-one-out errors with the radius-margin bound.

Sweeps the blob datasets and the (C, kernel parameter) grid of a config
file, e.g. config/experiments/blobs.yaml, and prints one row per
configuration.
"""
import argparse
import datetime
from itertools import product

import numpy as np

import msvm_core as core


def main():
    np.set_printoptions(suppress=True)

    parser = argparse.ArgumentParser()
    parser.add_argument("--config", required=True, help="Path to configuration file.")
    parser.add_argument(
        "--log",
        nargs="?",
        default=None,
        const="",
        help="Log data. Optionally specify prefix for log directoy.",
    )
    args = parser.parse_args()

    config = core.parsing.load_config(args.config)
    settings = core.qp.SolverSettings.from_config(config.get("solver", {}))
    ball_settings = core.geometry.BallSettings.from_config(config.get("ball", {}))
    grid = config["grid"]
    C_grid = core.parsing.parse_grid(grid["C"])
    keys = sorted(grid.get("params", {}))
    values = [core.parsing.parse_grid(grid["params"][k]) for k in keys]
    param_grid = [dict(zip(keys, combination)) for combination in product(*values)]

    logger = core.logging.DataLogger(config) if args.log is not None else None

    print(f"{'data':>4} {'Q':>2} {'m':>3} {'C':>8} {'params':<14} {'loo':>4} {'bound':>10} {'bound/Q^2':>10} {'ok':>3}")
    violations = 0
    for index, d in enumerate(config["datasets"]):
        dataset = core.util.gaussian_blobs(
            core.parsing.parse_number(d["n_per_class"], dtype=int),
            core.parsing.parse_number(d["Q"], dtype=int),
            spread=core.parsing.parse_number(d.get("spread", 0.5)),
            separation=core.parsing.parse_number(d.get("separation", 3.0)),
            seed=core.parsing.parse_number(d.get("seed", 0), dtype=int),
        )
        for C in C_grid:
            for params in param_grid:
                kernel = core.kernels.KernelSpec(grid["family"], **params)
                try:
                    model = core.model.train(dataset, kernel, C=C, settings=settings)
                    loo = core.selection.exact_loo(dataset, kernel, C=C, settings=settings)
                    report = core.selection.radius_margin_bound(
                        model, loo=loo, ball_settings=ball_settings
                    )
                except core.selection.NUMERICAL_FAILURES as e:
                    print(f"{index:>4} C={C:g} {params}: failed ({e})")
                    continue

                ok = report.loo_errors <= report.bound_value + 1e-6
                ok = ok and not report.error_check_violations()
                violations += not ok
                params_str = ",".join(f"{k}={v:g}" for k, v in sorted(params.items()))
                print(
                    f"{index:>4} {dataset.Q:>2} {dataset.m:>3} {C:>8.3g} {params_str:<14} "
                    f"{report.loo_errors:>4} {report.bound_value:>10.4g} "
                    f"{report.per_q2:>10.4g} {'yes' if ok else 'NO':>3}"
                )
                if logger is not None:
                    logger.append("loo_errors", report.loo_errors)
                    logger.append("bound", report.bound_value)

    print(f"{violations} configurations violate the bound or the per-point inequality.")
    if logger is not None:
        logger.save(datetime.datetime.now(), name=args.log)


if __name__ == "__main__":
    main()
