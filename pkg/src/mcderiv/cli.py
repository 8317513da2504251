"""Command line front end.

Subcommands mirror the library surface: closed-form error curves, Monte
Carlo runs, the SINR objective, the two optimizers, and canned figure
sweeps.  All output is CSV (stdout by default) so runs are easy to diff;
identical config and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import analysis
from .harness import (
    ConfigError,
    FIGURE_IDS,
    detector_config,
    build_channel,
    load_config,
    run_ber_point,
    run_figure_sweep,
    write_csv,
)

_THRESHOLD_THEORY = {"fstd": analysis.fstd_theoretical_ber,
                     "matd": analysis.matd_theoretical_ber}


def _parse_orders(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad order list {text!r}")


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _emit_rows(path: str | None, header: list[str], rows: list[list]) -> None:
    out, close = _open_out(path)
    try:
        out.write(",".join(header) + "\n")
        for row in rows:
            out.write(",".join(repr(v) if isinstance(v, float) else str(v)
                               for v in row) + "\n")
    finally:
        if close:
            out.close()


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "bits", None) is not None:
        cfg = dataclasses.replace(cfg, bit_budget=int(args.bits))
    return cfg


def _cmd_theory(args) -> int:
    cfg = _load(args)
    orders = args.orders if args.orders is not None else list(cfg.orders)
    kind = args.detector
    theory_fn = _THRESHOLD_THEORY[kind]
    channel = build_channel(cfg)
    rows = []
    for order in orders:
        for molecules in cfg.molecules_grid:
            dcfg = detector_config(cfg, kind, order, molecules, channel=channel)
            if cfg.gamma_policy == "fixed":
                gamma = float(cfg.gamma_value)
            else:
                gamma = analysis.optimize_threshold(
                    dcfg, grid_points=cfg.gamma_grid_points)
            dcfg = dataclasses.replace(dcfg, threshold=gamma)
            rows.append([order, molecules, gamma, theory_fn(dcfg)])
    _emit_rows(args.out, ["m", "M", "gamma", "ber_theory"], rows)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    detectors = args.detector if args.detector else list(cfg.detectors)
    records = []
    channel = build_channel(cfg)
    for kind in detectors:
        for order in cfg.orders:
            for molecules in cfg.molecules_grid:
                records.append(run_ber_point(cfg, kind, order, molecules,
                                             channel=channel))
    out, close = _open_out(args.out)
    try:
        write_csv(out, records, include_timing=args.timing)
    finally:
        if close:
            out.close()
    return 0


def _cmd_sinr(args) -> int:
    cfg = _load(args)
    window = args.window if args.window is not None else 10
    channel = build_channel(cfg)
    rows = []
    for order in cfg.orders:
        for molecules in cfg.molecules_grid:
            dcfg = detector_config(cfg, "fstd", order, molecules, channel=channel)
            rep = analysis.sinr(dcfg, window=window, order=order)
            rows.append([order, molecules, rep.value, rep.signal_power,
                         rep.intended_noise_var, rep.interference_var, rep.window])
    _emit_rows(args.out, ["m", "M", "sinr", "signal_power",
                          "intended_noise_var", "interference_var", "window"], rows)
    return 0


def _cmd_optimize_order(args) -> int:
    cfg = _load(args)
    window = args.window if args.window is not None else 10
    max_order = args.max_order if args.max_order is not None else max(cfg.orders)
    channel = build_channel(cfg)
    rows = []
    for molecules in cfg.molecules_grid:
        dcfg = detector_config(cfg, "fstd", 0, molecules, channel=channel)
        best = analysis.optimize_derivative_order(dcfg, max_order=max_order,
                                                  window=window)
        best_sinr = analysis.sinr(dcfg, window=window, order=best).value
        rows.append([molecules, best, best_sinr])
    _emit_rows(args.out, ["M", "best_m", "sinr"], rows)
    return 0


def _cmd_optimize_threshold(args) -> int:
    cfg = _load(args)
    channel = build_channel(cfg)
    dcfg = detector_config(cfg, args.detector, args.order, args.molecules,
                           channel=channel)
    if args.evaluator == "theory":
        gamma = analysis.optimize_threshold(dcfg, grid_points=cfg.gamma_grid_points)
        dcfg = dataclasses.replace(dcfg, threshold=gamma)
        ber = _THRESHOLD_THEORY[args.detector](dcfg)
    else:
        from .harness import _calibration_statistics

        stats, labels = _calibration_statistics(cfg, dcfg)
        gamma = analysis.optimize_threshold(dcfg, evaluator="simulation",
                                            grid_points=cfg.gamma_grid_points,
                                            statistics=stats, labels=labels)
        ber = float(np.mean((stats > gamma) != labels.astype(bool)))
    _emit_rows(args.out, ["detector", "m", "M", "gamma", "ber"],
               [[args.detector, args.order, args.molecules, gamma, ber]])
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    records, extras = run_figure_sweep(cfg, args.figure)
    out, close = _open_out(args.out)
    try:
        write_csv(out, records, extras, include_timing=args.timing)
    finally:
        if close:
            out.close()
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcderiv",
        description="Derivative pre-processed molecular communication receivers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, bits=False):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        if bits:
            p.add_argument("--bits", type=float, default=None,
                           help="override the bit budget")

    p = sub.add_parser("theory", help="closed-form error probability curves")
    common(p)
    p.add_argument("--m", dest="orders", type=_parse_orders, default=None,
                   help="comma separated derivative orders (default config)")
    p.add_argument("--detector", choices=sorted(_THRESHOLD_THEORY), default="fstd")
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("simulate", help="Monte Carlo error rates over the config grid")
    common(p, bits=True)
    p.add_argument("--detector", action="append", default=None,
                   help="detector to run (repeatable; default config list)")
    p.add_argument("--timing", action="store_true",
                   help="keep wall times in the CSV (breaks byte reproducibility)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sinr", help="signal-to-interference-plus-noise objective")
    common(p)
    p.add_argument("--window", type=int, default=None,
                   help="objective symbol memory (default 10)")
    p.set_defaults(func=_cmd_sinr)

    p = sub.add_parser("optimize-order", help="best derivative order per grid point")
    common(p)
    p.add_argument("--window", type=int, default=None,
                   help="objective symbol memory (default 10)")
    p.add_argument("--max-order", type=int, default=None)
    p.set_defaults(func=_cmd_optimize_order)

    p = sub.add_parser("optimize-threshold", help="error-minimizing decision threshold")
    common(p)
    p.add_argument("--detector", choices=("fstd", "matd", "ftd"), required=True)
    p.add_argument("--order", type=int, default=0)
    p.add_argument("--molecules", type=float, required=True)
    p.add_argument("--evaluator", choices=("theory", "simulation"), default="theory")
    p.set_defaults(func=_cmd_optimize_threshold)

    p = sub.add_parser("sweep", help="run a canned figure sweep")
    common(p, bits=True)
    p.add_argument("--figure", choices=FIGURE_IDS, required=True)
    p.add_argument("--timing", action="store_true",
                   help="keep wall times in the CSV (breaks byte reproducibility)")
    p.set_defaults(func=_cmd_sweep)
    return parser


def cli(argv: list[str] | None = None) -> int:
    """Run the command line tool; returns the process exit status."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
