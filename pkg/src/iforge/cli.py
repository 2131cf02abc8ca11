"""Command-line surface: verification suites, energy computation, the
gluing scan, and the lattice flow.

One executable with four subcommands.  Tabular results go to CSV, single
results to JSON, flow states to the binary checkpoint format; every
output embeds the algebra normalization tag and the grid parameters that
produced it, so a file is interpretable without the invocation.  A plain
``key = value`` config file can supply any parameter; flags override the
file.  Exit codes: 0 success, 1 verification failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple

from . import algebra, background, flow, forms, gluing, instanton, quadrature, verify
from .errors import (
    LineSearchFailed,
    NonFiniteValue,
    NotAntisymmetric,
    PlaquetteBranchCut,
    ResolutionInsufficient,
)

MIN_SPHERE_RULE = 3
MIN_LATTICE_EXTENT = 2

CONNECTIONS = ("instanton", "background", "glued")
REGIONS = ("full-r4", "ball", "annulus")
METRICS = ("flat", "cylinder")


class ConfigError(ValueError):
    """Raised for anything the operator got wrong; mapped to exit 2.

    Subclasses ValueError so argparse type callables that raise it are
    reported as argument errors instead of tracebacks."""


def read_config_file(path) -> Mapping[str, str]:
    """Parse a ``key = value`` file.  Blank lines and ``#`` comments are
    ignored; keys are lowercased with dashes folded to underscores."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(
                f"{path}:{lineno}: expected 'key = value', got {line!r}"
            )
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        entries[key] = value.strip()
    return entries


def _parse_float(text: str, label: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise ConfigError(f"{label} must be a real number, got {text!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"{label} must be finite, got {text!r}")
    return value


def _parse_int(text: str, label: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{label} must be an integer, got {text!r}") from exc


def _parse_grid(text: str, label: str) -> Tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{label} must list at least one value")
    grid = tuple(_parse_float(p, label) for p in parts)
    if any(v <= 0 for v in grid):
        raise ConfigError(f"{label} entries must be positive")
    return grid


def _parse_bool(text: str, label: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{label} must be a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """Resolved parameters for one command.

    Precedence during resolution is flags over config file over the
    environment (workers only) over the defaults recorded here.
    """

    command: str
    suite: str = "all"
    connection: str = "instanton"
    region: str = "full-r4"
    metric: str = "flat"
    resolution: int = 5
    workers: int = 1
    delta_grid: Tuple[float, ...] = (0.2, 0.1, 0.05)
    lambda_grid: Optional[Tuple[float, ...]] = None
    alpha: float = 1.1
    seed: int = 0
    flip: bool = False
    out: Optional[Path] = None
    extras: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.command == "flow":
            if self.resolution < MIN_LATTICE_EXTENT:
                raise ConfigError(
                    f"lattice extent {self.resolution} below minimum "
                    f"{MIN_LATTICE_EXTENT}"
                )
        elif self.resolution < MIN_SPHERE_RULE:
            raise ConfigError(
                f"resolution {self.resolution} below minimum {MIN_SPHERE_RULE}"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.alpha < 1.0:
            raise ConfigError(f"alpha must be at least 1, got {self.alpha}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if any(d <= 0 for d in self.delta_grid):
            raise ConfigError("delta grid entries must be positive")
        if self.lambda_grid is not None:
            if any(l <= 0 for l in self.lambda_grid):
                raise ConfigError("lambda grid entries must be positive")
            worst = max(self.lambda_grid)
            tightest = min(self.delta_grid)
            if worst >= tightest:
                raise ConfigError(
                    f"every bubble scale must sit below every ball radius; "
                    f"got lambda {worst} against delta {tightest}"
                )


def _resolve(
    args: argparse.Namespace, cfg: Mapping[str, str], command: str
) -> RunConfig:
    """Merge flags, config file entries, and environment into a RunConfig."""

    def pick(name, parse, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in cfg:
            return parse(cfg[name], name)
        return default

    workers = getattr(args, "workers", None)
    if workers is None and "workers" in cfg:
        workers = _parse_int(cfg["workers"], "workers")
    if workers is None:
        env = os.environ.get("IFORGE_WORKERS")
        if env is not None:
            workers = _parse_int(env, "IFORGE_WORKERS")
    if workers is None:
        workers = 1

    lambda_grid = getattr(args, "lambda_grid", None)
    if lambda_grid is None and "lambda_grid" in cfg:
        lambda_grid = _parse_grid(cfg["lambda_grid"], "lambda_grid")

    out = getattr(args, "out", None)
    if out is None and "out" in cfg:
        out = cfg["out"]

    default_rule = 4 if command == "flow" else 5
    if command == "glue-scan":
        default_rule = 7

    known = {
        "suite", "connection", "region", "metric", "resolution", "workers",
        "delta_grid", "lambda_grid", "alpha", "seed", "flip", "out",
    }
    extras = {k: v for k, v in cfg.items() if k not in known}

    return RunConfig(
        command=command,
        suite=pick("suite", lambda v, n: v, "all"),
        connection=pick("connection", lambda v, n: v, "instanton"),
        region=pick("region", lambda v, n: v, "full-r4"),
        metric=pick("metric", lambda v, n: v, "flat"),
        resolution=pick("resolution", _parse_int, default_rule),
        workers=workers,
        delta_grid=pick("delta_grid", _parse_grid, (0.2, 0.1, 0.05)),
        lambda_grid=lambda_grid,
        alpha=pick("alpha", _parse_float, 1.1),
        seed=pick("seed", _parse_int, 0),
        flip=pick("flip", _parse_bool, False),
        out=Path(out) if out is not None else None,
        extras=extras,
    )


def _out_dir(config: RunConfig) -> Path:
    directory = config.out if config.out is not None else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _metric_model(name: str) -> forms.MetricModel:
    if name == "flat":
        return forms.MetricModel.flat()
    if name == "cylinder":
        return forms.MetricModel.cylinder()
    raise ConfigError(f"unknown metric {name!r}; choose from {METRICS}")


def _background_from(config: RunConfig) -> background.BackgroundConnection:
    """Background from config-file entries; a bare invocation gets a unit
    curvature seed in the first coordinate plane so the scan has signal."""
    keys = set(config.extras)
    if keys & {
        "f0_12", "f0_13", "f0_14", "f0_23", "f0_24", "f0_34",
        "quad_seed", "quad_amplitude", "ball_radius",
    }:
        try:
            return background.from_config(config.extras)
        except (ValueError, NotAntisymmetric) as exc:
            raise ConfigError(f"bad background parameters: {exc}") from exc
    return background.from_config({"f0_12": "1,0,0"})


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify(config: RunConfig) -> int:
    checks = verify.run_suite(config.suite)
    print("\n".join(verify.format_report(checks)))
    return 0 if all(c.passed for c in checks) else 1


def _energy_region(config: RunConfig, domain_radius: float):
    if config.region == "full-r4":
        return quadrature.RegionSpec.full_r4()
    if config.region == "ball":
        return quadrature.RegionSpec.ball(domain_radius, scale_hint=domain_radius)
    if config.region == "annulus":
        return quadrature.RegionSpec.annulus(
            0.5 * domain_radius, domain_radius, scale_hint=domain_radius
        )
    raise ConfigError(f"unknown region {config.region!r}; choose from {REGIONS}")


def cmd_energy(config: RunConfig) -> int:
    metric = _metric_model(config.metric)
    rule = config.resolution
    meta_extra = {"connection": config.connection, "region": config.region}

    if config.connection == "instanton":
        gauge = instanton.InstantonGauge(
            instanton.GaugeKind.REGULAR, 1.0, algebra.IDENTITY_BASIS
        )
        orientation = config.extras.get("orientation", "standard")
        if orientation == "reversed":
            field_ = instanton.orientation_reversed(gauge)
        elif orientation == "standard":
            field_ = instanton.connection_field(gauge)
        else:
            raise ConfigError(
                f"orientation must be standard or reversed, got {orientation!r}"
            )
        region = _energy_region(config, 1.0)
        energy, err = quadrature.ym_energy_with_error(field_, region, metric, rule)
        p1 = quadrature.pontryagin_number(field_, region, metric, rule)
        meta_extra["bubble_scale"] = 1.0
        meta_extra["orientation"] = orientation

    elif config.connection == "background":
        if config.region == "full-r4":
            raise ConfigError(
                "a background germ grows polynomially; integrate it over "
                "ball or annulus, not full-r4"
            )
        bg = _background_from(config)
        field_ = background.connection_field(bg)
        region = _energy_region(config, bg.ball_radius)
        energy, err = quadrature.ym_energy_with_error(field_, region, metric, rule)
        p1 = quadrature.pontryagin_number(field_, region, metric, rule)
        meta_extra["ball_radius"] = bg.ball_radius

    elif config.connection == "glued":
        if config.region != "ball":
            raise ConfigError(
                "the glued configuration is assembled over its background "
                "ball; use region 'ball'"
            )
        if config.metric != "flat":
            raise ConfigError("the glued assembly is bookkept in the flat metric")
        bg = _background_from(config)
        delta = min(config.delta_grid)
        lam = (
            min(config.lambda_grid)
            if config.lambda_grid is not None
            else delta**3 / 8.0
        )
        split = background.split_curvature(bg.f0)
        basis = gluing.bubble_basis_for(split, flip=config.flip)
        try:
            glued = gluing.glued_connection(bg, lam, delta, basis=basis)
        except ValueError as exc:
            raise ConfigError(f"infeasible gluing scales: {exc}") from exc
        parts = gluing.energy_split(glued, rule=rule)
        field_ = background.connection_field(bg)
        region = _energy_region(config, bg.ball_radius)
        e_bg, err_bg = quadrature.ym_energy_with_error(field_, region, metric, rule)
        p1_bg = quadrature.pontryagin_number(field_, region, metric, rule)
        energy = e_bg + 16.0 * math.pi**2 + parts["E_gain"] - parts["E_loss"]
        err = err_bg + parts["quad_err"]
        p1 = p1_bg - 4.0
        meta_extra.update(
            {"delta": delta, "lambda": lam, "ball_radius": bg.ball_radius}
        )

    else:
        raise ConfigError(
            f"unknown connection {config.connection!r}; choose from {CONNECTIONS}"
        )

    payload = {
        "energy": float(energy),
        "p1": float(p1),
        "quad_err": float(err),
        "metadata": dict(
            gluing.scan_metadata(
                rule, _metric_model(config.metric), config.flip, extra=meta_extra
            )
        ),
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if config.out is not None:
        (_out_dir(config) / "energy.json").write_text(text)
    return 0


def cmd_glue_scan(config: RunConfig) -> int:
    bg = _background_from(config)
    rows = gluing.energy_comparison_scan(
        bg,
        deltas=config.delta_grid,
        lambdas=config.lambda_grid,
        rule=config.resolution,
        flip=config.flip,
        workers=config.workers,
    )
    grid_meta = {
        "delta_grid": list(config.delta_grid),
        "lambda_grid": (
            list(config.lambda_grid) if config.lambda_grid is not None else "per-delta"
        ),
        "ball_radius": bg.ball_radius,
    }
    meta = gluing.scan_metadata(config.resolution, flip=config.flip, extra=grid_meta)
    directory = _out_dir(config)
    csv_path = directory / "glue_scan.csv"
    json_path = directory / "glue_scan.json"
    gluing.scan_to_csv(rows, csv_path)
    gluing.scan_to_json(rows, json_path, meta)
    print(f"{len(rows)} feasible rows")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def cmd_flow(config: RunConfig) -> int:
    extent = (config.resolution,) * 4
    spacing = _parse_float(config.extras.get("spacing", "1.0"), "spacing")
    amplitude = _parse_float(config.extras.get("amplitude", "0.05"), "amplitude")
    kwargs = {"alpha": config.alpha}
    for key, parse in (
        ("step", _parse_float),
        ("grad_tol", _parse_float),
        ("max_iters", _parse_int),
        ("max_backtracks", _parse_int),
    ):
        if key in config.extras:
            kwargs[key] = parse(config.extras[key], key)
    try:
        flow_cfg = flow.FlowConfig(**kwargs)
        start = flow.perturbed_lattice(
            extent, spacing=spacing, amplitude=amplitude, seed=config.seed
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    result = flow.flow_run(start, flow_cfg)
    directory = _out_dir(config)
    trace_path = directory / "flow_trace.csv"
    ckpt_path = directory / "flow_state.ckpt"
    flow.write_trace(result, trace_path)
    flow.save_checkpoint(result.field, ckpt_path)
    print(
        f"converged={result.converged} iterations={result.iterations} "
        f"energy={float(result.energies[-1])!r} "
        f"grad_norm={float(result.grad_norms[-1])!r}"
    )
    print(f"wrote {trace_path}")
    print(f"wrote {ckpt_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iforge",
        description=__doc__.splitlines()[0],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value parameter file")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--workers", type=int, help="process count for scans")
        p.add_argument("--resolution", type=int, help="quadrature rule or lattice extent")
        p.add_argument("--delta-grid", dest="delta_grid", type=lambda s: _parse_grid(s, "delta-grid"), help="comma-separated ball radii")
        p.add_argument("--lambda-grid", dest="lambda_grid", type=lambda s: _parse_grid(s, "lambda-grid"), help="comma-separated bubble scales")
        p.add_argument("--alpha", type=float, help="flow energy exponent")
        p.add_argument("--seed", type=int, help="RNG seed for sampled inputs")

    p_verify = sub.add_parser("verify", help="run invariant suites")
    p_verify.add_argument(
        "suite",
        nargs="?",
        default=None,
        choices=verify.SUITE_ORDER + ("all",),
    )
    common(p_verify)

    p_energy = sub.add_parser("energy", help="energy, charge, quadrature error as JSON")
    p_energy.add_argument("connection", nargs="?", default=None, choices=CONNECTIONS)
    p_energy.add_argument("region", nargs="?", default=None, choices=REGIONS)
    p_energy.add_argument("metric", nargs="?", default=None, choices=METRICS)
    common(p_energy)

    p_scan = sub.add_parser("glue-scan", help="measured vs predicted neck differences")
    common(p_scan)

    p_flow = sub.add_parser("flow", help="lattice descent; trace CSV plus checkpoint")
    common(p_flow)

    return parser


_HANDLERS = {
    "verify": cmd_verify,
    "energy": cmd_energy,
    "glue-scan": cmd_glue_scan,
    "flow": cmd_flow,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = read_config_file(args.config) if args.config else {}
        config = _resolve(args, cfg, args.command)
        return _HANDLERS[args.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        ResolutionInsufficient,
        NonFiniteValue,
        PlaquetteBranchCut,
        LineSearchFailed,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
