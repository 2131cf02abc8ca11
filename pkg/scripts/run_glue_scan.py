#!/usr/bin/env python3
"""Neck energy comparison over a grid of ball radii and bubble scales.

Runs the measured-versus-predicted scan, writes glue_scan.csv and
glue_scan.json into the output directory, and prints one line per ball
radius with the extrapolated small-scale limit of diff / lambda^2
against the prediction.  The extrapolation fits diff / lambda^2 as an
affine function of lambda^2 and reads off the intercept.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from iforge import background, gluing
from iforge.cli import read_config_file


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--deltas", default="0.2,0.1,0.05",
                        help="comma-separated ball radii")
    parser.add_argument("--lambdas", default=None,
                        help="comma-separated bubble scales (default: radius-cubed ladder)")
    parser.add_argument("--rule", type=int, default=7, help="sphere quadrature rule")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--flip", action="store_true",
                        help="use the sign-flipped bubble frame")
    parser.add_argument("--config", default=None,
                        help="key = value file with background entries (f0_12 .. f0_34)")
    parser.add_argument("--out", default=".", help="output directory")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    entries = read_config_file(args.config) if args.config else {"f0_12": "1,0,0"}
    bg = background.from_config(entries)

    deltas = tuple(float(s) for s in args.deltas.split(","))
    lambdas = (
        tuple(float(s) for s in args.lambdas.split(","))
        if args.lambdas
        else None
    )
    rows = gluing.energy_comparison_scan(
        bg,
        deltas=deltas,
        lambdas=lambdas,
        rule=args.rule,
        flip=args.flip,
        workers=args.workers,
    )
    if not rows:
        print("no feasible (delta, lambda) pairs", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = gluing.scan_metadata(
        args.rule,
        flip=args.flip,
        extra={"delta_grid": list(deltas),
               "lambda_grid": list(lambdas) if lambdas else "per-delta",
               "ball_radius": bg.ball_radius},
    )
    gluing.scan_to_csv(rows, out / "glue_scan.csv")
    gluing.scan_to_json(rows, out / "glue_scan.json", meta)

    print(f"{len(rows)} rows -> {out / 'glue_scan.csv'}")
    print(f"{'delta':>8} {'rows':>4} {'limit diff/l^2':>16} {'predicted':>12} {'ratio':>8}")
    for delta in deltas:
        group = [r for r in rows if r.delta == delta]
        if not group:
            continue
        lams = np.array([r.lam for r in group])
        ys = np.array([r.diff / r.lam**2 for r in group])
        if len(group) >= 2:
            limit = float(np.polyfit(lams**2, ys, 1)[1])
        else:
            limit = float(ys[0])
        pred = group[0].predicted_per_lambda2
        ratio = limit / pred if pred != 0.0 else float("nan")
        print(f"{delta:8.3f} {len(group):4d} {limit:16.6f} {pred:12.6f} {ratio:8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
