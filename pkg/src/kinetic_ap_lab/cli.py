"""Command line front end.

Subcommands:

* run    -- execute a preset or a config file, writing CSVs, a JSON
            summary, and figures into the output directory.
* verify -- check the discrete Poincare inequalities on randomized fields
            plus the sharp torus mode; nonzero exit on any violation.
* sweep  -- rerun one configuration across a list of epsilon values and
            tabulate fitted decay rates.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__, experiments, report
from .equilibrium import gaussian_fp
from .inequalities import (torus_sharpness_mode, verify_gaussian_poincare,
                           verify_torus_poincare)
from .mesh import build_spatial_mesh, build_velocity_mesh


def _parse_epsilons(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad epsilon list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty epsilon list")
    if any(e < 0 for e in values):
        raise argparse.ArgumentTypeError("epsilon must be >= 0")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinetic-ap-lab",
        description="Asymptotic-preserving kinetic solver experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with ExperimentConfig fields")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for randomized initial data")
    common.add_argument("--epsilon", type=_parse_epsilons, default=None,
                        metavar="E1,E2,...", help="comma-separated epsilon list")
    common.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering, write CSV/JSON only")

    p_run = sub.add_parser("run", parents=[common],
                           help="run a preset test or a custom config")
    p_run.add_argument("--test", default=None,
                       choices=("test1", "test2", "test3", "test4", "test5",
                                "custom"),
                       help="preset id (default: from config, else custom)")

    p_verify = sub.add_parser("verify", help="verify discrete Poincare inequalities")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--samples", type=int, default=1000)
    p_verify.add_argument("--out", default=None,
                          help="optional directory for a margins CSV")
    p_verify.add_argument("--N", type=int, default=51)
    p_verify.add_argument("--L", type=int, default=20)
    p_verify.add_argument("--v-star", type=float, default=8.0)
    p_verify.add_argument("--R", type=float, default=1.0)

    sub.add_parser("sweep", parents=[common],
                   help="epsilon sweep of one configuration")
    return parser


def _load_config(args, default_test: str = "custom") -> experiments.ExperimentConfig:
    if args.config:
        cfg = experiments.ExperimentConfig.from_file(args.config)
    else:
        test = getattr(args, "test", None) or default_test
        cfg = experiments.preset(test) if test != "custom" \
            else experiments.ExperimentConfig()
    if getattr(args, "test", None) and args.config:
        cfg = experiments.preset(args.test) if args.test != "custom" else cfg
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epsilon is not None:
        overrides["epsilons"] = args.epsilon
    if args.no_plots:
        overrides["make_plots"] = False
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    summary = experiments.run(cfg)
    print(f"wrote {cfg.out_dir}/summary.json ({summary.get('test', cfg.test)})")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    summary = experiments.sweep(cfg, args.epsilon)
    for eps, entry in summary["rates"].items():
        print(f"epsilon={eps}: rate={entry['rate']:+.4f} "
              f"(r2={entry['r_squared']:.6f})")
    return 0


def _cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    vmesh = build_velocity_mesh(args.v_star, args.L)
    xmesh = build_spatial_mesh(args.R, args.N)
    M = gaussian_fp(vmesh)
    rows = []
    failures = 0

    for k in range(args.samples):
        f = rng.normal(size=vmesh.centers.size) * M.cell_values
        rep = verify_gaussian_poincare(f, M)
        rows.append(("gaussian", k, rep.lhs, rep.rhs, rep.margin))
        failures += 0 if rep.holds else 1

    for k in range(args.samples):
        phi = rng.normal(size=xmesh.centers.size)
        phi -= (phi @ xmesh.widths) / xmesh.length
        rep = verify_torus_poincare(phi, xmesh)
        rows.append(("torus", k, rep.lhs, rep.rhs, rep.margin))
        failures += 0 if rep.holds else 1

    sharp = verify_torus_poincare(torus_sharpness_mode(xmesh), xmesh)
    ratio = sharp.lhs / sharp.rhs
    rows.append(("torus_sharp_mode", 0, sharp.lhs, sharp.rhs, sharp.margin))
    sharp_ok = sharp.holds and ratio > 1.0 - 1e-10

    for name, ok, detail in (
            ("gaussian_poincare", failures == 0, f"{args.samples} samples"),
            ("torus_poincare", failures == 0, f"{args.samples} samples"),
            ("torus_sharpness", sharp_ok, f"lhs/rhs={ratio:.12f}")):
        print(f"{'PASS' if ok else 'FAIL'} {name} ({detail})")

    if args.out:
        from pathlib import Path
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_table(out / "poincare_margins.csv",
                           ("family", "sample", "lhs", "rhs", "margin"), rows,
                           {"seed": args.seed, "samples": args.samples,
                            "N": args.N, "L": args.L, "v_star": args.v_star,
                            "R": args.R})
    return 0 if (failures == 0 and sharp_ok) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "verify": _cmd_verify, "sweep": _cmd_sweep}
    try:
        return handlers[args.command](args)
    except (experiments.ExperimentError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
