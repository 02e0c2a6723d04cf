"""Command-line entry points.

Subcommands: train, price, sweep, surface, hist, volgrid. Every command is a
pure function of (config, seed) to bytes on disk: rerunning reproduces
identical CSV/JSON/PNG outputs, and ``--threads`` never changes results. Exit
codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import rng
from .config import load_config
from .diffusion import LocalVolParams, simulate, write_path_dump
from .drift_nets import load_stack, save_stack, surface
from .errors import NumericalError, ValidationError
from .evaluation import (
    SweepSpec,
    compare,
    histogram,
    sweep,
    theoretical_terminal_density,
    write_histogram_csv,
    write_report_csv,
    write_sweep_csv,
)
from .payoffs import payoff_description
from .training import train
from .volsurface import surface_grid, write_surface_csv

__all__ = ["main"]


def _add_common(parser, need_stack=False):
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="override the command's seed")
    parser.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    if need_stack:
        parser.add_argument("--stack", default=None, help="trained drift stack JSON")
        parser.add_argument("--plain", action="store_true",
                            help="price with the null drift instead of a stack")


def _out_dir(args, cfg) -> Path:
    out = Path(args.out) if args.out else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_stack_arg(args, cfg):
    if getattr(args, "plain", False):
        return None
    if not getattr(args, "stack", None):
        raise ValidationError("this command needs --stack <file> or --plain")
    try:
        stack = load_stack(args.stack)
    except FileNotFoundError:
        raise ValidationError(f"stack file not found: {args.stack}") from None
    if stack.maturity != cfg.grid.maturity or stack.n_steps != cfg.grid.n_steps:
        raise ValidationError(
            f"stack was trained on grid (T={stack.maturity}, n_steps={stack.n_steps}) "
            f"but the config grid is (T={cfg.grid.maturity}, n_steps={cfg.grid.n_steps})"
        )
    return stack


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    train_cfg = cfg.train
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    report = train(cfg.model, cfg.payoff, cfg.grid, cfg.mode, train_cfg)
    save_stack(out / "stack.json", report.stack)
    with open(out / "train_report.json", "w") as fh:
        json.dump(report.as_dict(), fh, indent=1)
        fh.write("\n")
    if not args.no_figures:
        from . import figures
        figures.render_loss_history(
            out / "loss_history.png", report.loss_history,
            steps_per_batch=train_cfg.steps_per_batch,
            title=f"training loss — {payoff_description(cfg.payoff)}",
        )
    print(f"trained {train_cfg.total_steps} steps; wrote {out / 'stack.json'}")
    return 0


def cmd_price(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    stack = _load_stack_arg(args, cfg)
    seed = args.seed if args.seed is not None else cfg.eval_seed
    report = compare(cfg.model, cfg.payoff, cfg.grid, stack, cfg.eval_paths, seed)
    payload = report.as_dict()
    payload.update({"seed": seed, "payoff": payoff_description(cfg.payoff),
                    "mode": "plain" if stack is None else stack.mode})
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    write_report_csv(out / "report.csv", report)
    if args.dump_paths:
        n_dump = min(args.dump_paths, cfg.eval_paths)
        batch = simulate(cfg.model, cfg.grid, stack, n_dump, seed,
                         domain=rng.DOMAIN_EVAL_PLAIN if stack is None else rng.DOMAIN_EVAL_IS)
        write_path_dump(out / "paths.csv", batch, cfg.grid)
    if not args.no_figures:
        from . import figures
        figures.render_compare(out / "report.png", report)
    print(f"price_is={report.price_is:.8g} std_ratio={report.std_ratio:.4g} -> {out / 'report.csv'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    stack = _load_stack_arg(args, cfg)
    seed = args.seed if args.seed is not None else cfg.eval_seed
    spec = SweepSpec.symmetric(args.param, span=args.span, points=args.points)
    rows = sweep(cfg.model, cfg.payoff, cfg.grid, stack, spec,
                 cfg.eval_paths, seed, threads=args.threads)
    csv_path = out / f"sweep_{args.param}.csv"
    write_sweep_csv(csv_path, rows)
    if not args.no_figures:
        from . import figures
        figures.render_sweep(out / f"sweep_{args.param}.png", rows,
                             title=f"robustness in {args.param} — {payoff_description(cfg.payoff)}")
    n_valid = sum(r.valid for r in rows)
    print(f"swept {args.param} over {len(rows)} points ({n_valid} valid) -> {csv_path}")
    return 0


def cmd_surface(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    stack = _load_stack_arg(args, cfg)
    if stack is None:
        raise ValidationError("surface requires a trained stack (--stack)")
    x0 = stack.x0_reference
    x_min = args.x_min if args.x_min is not None else 0.1 * x0
    x_max = args.x_max if args.x_max is not None else 1.9 * x0
    rows, step0 = surface(stack, cfg.grid, x_min, x_max, args.n_x)
    csv_path = out / "surface.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("t,x,a\n")
        for t, x, a in rows:
            fh.write(f"{t:.17g},{x:.17g},{a:.17g}\n")
    with open(out / "surface_step0.json", "w") as fh:
        json.dump({"step0": step0, "mode": stack.mode,
                   "x0_reference": stack.x0_reference}, fh, indent=1)
        fh.write("\n")
    if not args.no_figures:
        from . import figures
        figures.render_surface(out / "surface.png", rows, step0,
                               title=f"{stack.mode} drift surface")
    print(f"surface on {len(rows)} nodes -> {csv_path}")
    return 0


def cmd_hist(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    stack = _load_stack_arg(args, cfg)
    seed = args.seed if args.seed is not None else cfg.eval_seed
    domain = rng.DOMAIN_EVAL_PLAIN if stack is None else rng.DOMAIN_EVAL_IS
    batch = simulate(cfg.model, cfg.grid, stack, cfg.eval_paths, seed, domain=domain)
    if args.quantity == "weights":
        values = batch.weights
        log_scale = True if args.log is None else args.log
    else:
        values = batch.terminal
        log_scale = False if args.log is None else args.log
    bins = histogram(values, args.bins, log_scale=log_scale)
    csv_path = out / f"hist_{args.quantity}.csv"
    write_histogram_csv(csv_path, bins)
    if not args.no_figures:
        density = None
        if args.quantity == "terminal" and not log_scale:
            try:
                xs = np.linspace(values.min(), values.max(), 200)
                density = theoretical_terminal_density(cfg.model, cfg.grid, xs)
            except ValidationError:
                density = None
        from . import figures
        figures.render_histogram(out / f"hist_{args.quantity}.png", bins,
                                 log_scale=log_scale, density_curve=density,
                                 title=f"{args.quantity} distribution")
    print(f"histogram of {args.quantity} ({len(bins)} bins) -> {csv_path}")
    return 0


def cmd_volgrid(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    if not isinstance(cfg.model, LocalVolParams):
        raise ValidationError("volgrid requires a local_vol model")
    t_grid = np.linspace(cfg.grid.maturity / args.t_points, cfg.grid.maturity, args.t_points)
    k_grid = np.linspace(args.k_min, args.k_max, args.k_points)
    rows = surface_grid(cfg.model.chi, t_grid, k_grid)
    csv_path = out / "volgrid.csv"
    write_surface_csv(csv_path, rows)
    if not args.no_figures:
        from . import figures
        figures.render_volgrid(out / "volgrid.png", rows, title="volatility surfaces")
    print(f"vol grid {args.t_points}x{args.k_points} -> {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftmc",
        description="Monte Carlo pricing with a learned variance-reducing drift",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the drift networks")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("price", help="plain vs importance-sampling pricing report")
    _add_common(p, need_stack=True)
    p.add_argument("--dump-paths", type=int, default=0, metavar="N",
                   help="also dump the first N simulated paths to paths.csv")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("sweep", help="robustness sweep over one model parameter")
    _add_common(p, need_stack=True)
    p.add_argument("--param", required=True,
                   help="x0 or sigma (bachelier); x0, sigma, a, b, m or rho (local_vol)")
    p.add_argument("--span", type=float, default=0.5, help="relative span (0.5 = +/-50%%)")
    p.add_argument("--points", type=int, default=21, help="number of grid points")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("surface", help="tabulate the learned drift surface")
    _add_common(p, need_stack=True)
    p.add_argument("--x-min", type=float, default=None)
    p.add_argument("--x-max", type=float, default=None)
    p.add_argument("--n-x", type=int, default=41)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("hist", help="histogram of weights or terminal values")
    _add_common(p, need_stack=True)
    p.add_argument("--quantity", choices=("weights", "terminal"), default="weights")
    p.add_argument("--bins", type=int, default=50)
    log_group = p.add_mutually_exclusive_group()
    log_group.add_argument("--log", dest="log", action="store_true", default=None,
                           help="bin in log10 domain (default for weights)")
    log_group.add_argument("--linear", dest="log", action="store_false",
                           help="bin linearly (default for terminal values)")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("volgrid", help="export the implied/local volatility surfaces")
    _add_common(p)
    p.add_argument("--k-min", type=float, default=-1.0)
    p.add_argument("--k-max", type=float, default=1.0)
    p.add_argument("--k-points", type=int, default=41)
    p.add_argument("--t-points", type=int, default=20)
    p.set_defaults(func=cmd_volgrid)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
