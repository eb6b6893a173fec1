"""Command-line interface: ``circ-gof <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
Every artifact carries the tool version, the seed and the resolved
configuration; the thread count is deliberately left out because results
do not depend on it.
"""

from __future__ import annotations

import argparse
import difflib
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapScheme, calibrate
from .dataset import load_csv, make_grid
from .errors import CircGofError
from .gof import TestConfig
from .harness import (
    Scenario, TABLES, reproduce_table, resolve_threads, run_experiment,
)
from .nonparam import BandwidthSpec, LocalSmoother
from .param_fit import FitConfig, fit_circular_ls
from .spatial import ExponentialCovariance, SpatialFitConfig, SpatialModel, mh_fit, simulate_field

logger = logging.getLogger("circgof")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, and suggests close flags."""

    def error(self, message):
        if "unrecognized arguments:" in message:
            bad = message.split("unrecognized arguments:", 1)[1].split()
            known = [o for a in self._all_actions() for o in a.option_strings]
            hints = []
            for tok in bad:
                flag = tok.split("=", 1)[0]
                close = difflib.get_close_matches(flag, known, n=1)
                if close:
                    hints.append(f"{flag} (did you mean {close[0]}?)")
            if hints:
                message += "; " + ", ".join(hints)
        raise UsageError(f"{self.prog}: error: {message}")

    def _all_actions(self):
        acts = list(self._actions)
        for a in self._actions:
            if isinstance(a, argparse._SubParsersAction):
                for sub in a.choices.values():
                    acts.extend(sub._actions)
        return acts


def _meta(command: str, seed, config: dict) -> dict:
    return {"tool": "circgof", "version": __version__, "command": command, "seed": seed, "config": config}


def _json_text(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _csv_text(header_meta: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {json.dumps(header_meta, sort_keys=True)}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else ("nan" if not math.isfinite(v) else repr(float(v)))
                           for v in row) + "\n")
    return buf.getvalue()


def _config_of(args, drop=("func", "out", "threads", "log_level", "command")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in drop}


def _domain(args, d):
    lo = args.domain_lower or [0.0] * d
    hi = args.domain_upper or [1.0] * d
    if len(lo) == 1 and d > 1:
        lo = lo * d
    if len(hi) == 1 and d > 1:
        hi = hi * d
    if len(lo) != d or len(hi) != d:
        raise UsageError(f"domain bounds need {d} values per side")
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


# --- subcommands ---------------------------------------------------------

def cmd_fit_param(args):
    data = load_csv(args.input, args.angle_unit)
    cfg = FitConfig(tol_grad=args.tol, max_iter=args.max_iter, n_random_starts=args.starts, seed=args.seed)
    report = fit_circular_ls(data, cfg)
    _emit(_json_text({"meta": _meta("fit-param", args.seed, _config_of(args)), "fit": report.to_dict()}), args.out)


def cmd_fit_nonparam(args):
    data = load_csv(args.input, args.angle_unit)
    lo, hi = _domain(args, data.d)
    grid = make_grid(lo, hi, args.resolution or (201 if data.d == 1 else 51))
    sm = LocalSmoother(data.covariates, grid.points, BandwidthSpec(args.h, args.degree))
    m1, m2, m, _ = sm.fit_angles(data.responses)
    cols = [f"x{j + 1}" for j in range(data.d)] + ["m_hat", "m1_hat", "m2_hat"]
    rows = [list(p) + [a, b, c] for p, a, b, c in zip(grid.points, m, m1, m2)]
    _emit(_csv_text(_meta("fit-nonparam", None, _config_of(args)), cols, rows), args.out)


def cmd_gof_test(args):
    data = load_csv(args.input, args.angle_unit)
    lo, hi = _domain(args, data.d)
    cfg = TestConfig.default(args.statistic, args.degree, args.h, data.n, data.d,
                             domain=(lo, hi), resolution=args.resolution)
    scheme = BootstrapScheme(args.boot, args.B, args.recenter, args.residual_h)
    spatial = None
    if scheme.spatial:
        spatial = _spatial_config(args)
    run = calibrate(data, [cfg], scheme, args.seed, spatial=spatial, threads=resolve_threads(args.threads))[0]
    out = run.to_dict()
    out["meta"] = _meta("gof-test", args.seed, _config_of(args))
    if spatial is not None:
        out["meta"]["spatial_config"] = spatial.to_dict()
    _emit(_json_text(out), args.out)


def _spatial_config(args) -> SpatialFitConfig:
    base = {}
    if args.spatial_config not in (None, "default"):
        try:
            base = json.loads(Path(args.spatial_config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CircGofError(f"cannot read spatial config: {exc}") from None
        if "sigma2_bounds" in base:
            base["sigma2_bounds"] = tuple(base["sigma2_bounds"])
    for name in ("iterations", "burn_in"):
        val = getattr(args, name, None)
        if val is not None:
            base[name] = val
    try:
        return SpatialFitConfig(**base)
    except TypeError as exc:
        raise CircGofError(f"bad spatial config: {exc}") from None


def _locations(args):
    if args.locations:
        rows = []
        with open(args.locations, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        for ln in lines[1:]:
            rows.append([float(v) for v in ln.split(",")])
        return np.asarray(rows)
    g = np.linspace(0.0, 1.0, args.grid_side)
    if args.dim == 1:
        return g[:, None]
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def cmd_simulate_field(args):
    loc = _locations(args)
    model = SpatialModel(args.mu, ExponentialCovariance(args.sigma2, args.a_e))
    eps = simulate_field(model, loc, np.random.default_rng(args.seed))
    cols = [f"x{j + 1}" for j in range(loc.shape[1])] + ["epsilon"]
    rows = [list(p) + [e] for p, e in zip(loc, np.atleast_1d(eps))]
    _emit(_csv_text(_meta("simulate-field", args.seed, _config_of(args)), cols, rows), args.out)


def cmd_fit_spatial(args):
    data = load_csv(args.input, args.angle_unit)
    cfg = _spatial_config(args)
    post = mh_fit(data.responses, data.covariates, cfg, np.random.default_rng(args.seed))
    out = {"meta": _meta("fit-spatial", args.seed, _config_of(args)), "config": cfg.to_dict(),
           "posterior": post.to_dict(include_draws=True)}
    _emit(_json_text(out), args.out)


def _table_rows(tab):
    for row in tab.rows():
        yield [row["scheme"], row["statistic"], str(row["degree"]), f"{row['h']:g}",
               row["proportion"], row["se"], str(row["failed"])]


def _log_path(out):
    p = Path(out)
    return p.with_name(p.stem + ".repeats.csv")


def cmd_simulate(args):
    try:
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CircGofError(f"cannot read scenario: {exc}") from None
    if args.seed is not None:
        obj["seed"] = args.seed
    scn = Scenario.from_dict(obj)
    tab = run_experiment(scn, resolve_threads(args.threads))
    meta = _meta("simulate", scn.seed, scn.to_dict())
    cols = ["scheme", "statistic", "degree", "h", "proportion", "se", "failed"]
    _emit(_csv_text(meta, cols, _table_rows(tab)), args.out)
    Path(_log_path(args.out)).write_text(f"# {json.dumps(meta, sort_keys=True)}\n" + tab.log_csv(),
                                         encoding="utf-8")


def cmd_reproduce_table(args):
    header, rows, tables = reproduce_table(args.table, args.scale, args.seed, resolve_threads(args.threads),
                                           args.sigma2_preset, args.mc, args.B)
    meta = _meta("reproduce-table", args.seed, _config_of(args))
    _emit(_csv_text(meta, header, rows), args.out)
    log = [f"# {json.dumps(meta, sort_keys=True)}\n"]
    for tab in tables:
        log.append(f"# scenario {json.dumps(tab.scenario.to_dict(), sort_keys=True)}\n")
        log.append(tab.log_csv())
    Path(_log_path(args.out)).write_text("".join(log), encoding="utf-8")


# --- parser --------------------------------------------------------------

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> _Parser:
    parser = _Parser(prog="circ-gof", description="Goodness-of-fit tests for circular regression")
    parser.add_argument("--version", action="version", version=f"circgof {__version__}")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        if data:
            p.add_argument("--input", required=True)
            p.add_argument("--angle-unit", choices=["radians", "degrees"], default="radians")
        p.add_argument("--out")
        p.add_argument("--threads", type=_positive_int, default=None,
                       help="worker processes (default: CIRC_GOF_THREADS or all cores)")

    def domain(p):
        p.add_argument("--domain-lower", type=float, nargs="+")
        p.add_argument("--domain-upper", type=float, nargs="+")
        p.add_argument("--resolution", "--grid", type=_positive_int, help="grid cells per axis")

    def mcmc(p):
        p.add_argument("--spatial-config", help="JSON with SpatialFitConfig fields, or 'default'")
        p.add_argument("--iterations", type=_positive_int)
        p.add_argument("--burn-in", type=int)

    p = sub.add_parser("fit-param", help="circular least-squares fit of the arctangent model")
    common(p)
    p.add_argument("--seed", type=int, default=0, help="seed of the random multistart schedule")
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=_positive_int, default=200)
    p.set_defaults(func=cmd_fit_param)

    p = sub.add_parser("fit-nonparam", help="local polynomial atan2 estimate on a grid")
    common(p)
    p.add_argument("--h", type=_positive_float, required=True)
    p.add_argument("--degree", type=int, choices=[0, 1], default=1)
    domain(p)
    p.set_defaults(func=cmd_fit_nonparam)

    p = sub.add_parser("gof-test", help="bootstrap goodness-of-fit test")
    common(p)
    p.add_argument("--statistic", type=str.upper, choices=["T1", "T2"], required=True)
    p.add_argument("--degree", type=int, choices=[0, 1], default=1)
    p.add_argument("--h", type=_positive_float, required=True)
    p.add_argument("--boot", type=str.upper, choices=["PCB", "NPCB", "PSCB", "NPSCB"], default="PCB")
    p.add_argument("--B", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recenter", action="store_true", help="recenter residuals to zero mean direction")
    p.add_argument("--residual-h", type=_positive_float, help="bandwidth for nonparametric residuals")
    domain(p)
    mcmc(p)
    p.set_defaults(func=cmd_gof_test)

    p = sub.add_parser("simulate-field", help="draw one wrapped Gaussian field")
    common(p, data=False)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--locations", help="CSV of locations with a header row")
    g.add_argument("--grid-side", type=_positive_int, help="regular grid with this many points per axis")
    p.add_argument("--dim", type=int, choices=[1, 2], default=2)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma2", type=_positive_float, default=1.0)
    p.add_argument("--a-e", type=_positive_float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate_field)

    p = sub.add_parser("fit-spatial", help="MCMC fit of a wrapped Gaussian field")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    mcmc(p)
    p.set_defaults(func=cmd_fit_spatial)

    p = sub.add_parser("simulate", help="Monte Carlo run of one scenario")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce-table", help="rerun one of the 16 rejection tables")
    p.add_argument("--table", type=int, choices=sorted(TABLES), required=True)
    p.add_argument("--scale", choices=["desk", "full"], default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma2-preset", choices=["text", "captions"], default="text")
    p.add_argument("--mc", type=_positive_int, help="override the Monte Carlo repeats of the scale")
    p.add_argument("--B", type=_positive_int, help="override the bootstrap replicates of the scale")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.set_defaults(func=cmd_reproduce_table)
    return parser


def _check_conflicts(args):
    if args.command == "gof-test":
        spatial = args.boot in ("PSCB", "NPSCB")
        given = args.spatial_config is not None or args.iterations is not None or args.burn_in is not None
        if spatial and not given:
            raise UsageError(f"--boot {args.boot.lower()} needs --spatial-config (a JSON file or 'default')")
        if not spatial and given:
            raise UsageError(f"spatial options have no effect with --boot {args.boot.lower()}")
        if args.residual_h is not None and args.boot in ("PCB", "PSCB"):
            raise UsageError("--residual-h applies only to npcb and npscb")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_conflicts(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        args.func(args)
    except UsageError as exc:
        print(f"circ-gof: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CircGofError, OSError, ValueError) as exc:
        print(f"circ-gof: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
