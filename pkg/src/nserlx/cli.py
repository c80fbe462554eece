"""Command-line entry point.

Exit codes: 0 success, 1 domain or runtime error, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import AnalysisConfig, ConfigError, ExperimentConfig, parse_config
from .experiments import decay_experiment, fit_power_law
from .io import NDJSONWriter, RunManifest, read_csv, read_snapshot, write_csv, write_snapshot
from .linear import spectrum_table
from .functionals import block_groups
from .lp import besov_from_blocks, build_filter_bank
from .model import DomainError, ModelParams, VacuumError
from .solver import NormRequest, SimConfig, SolverError, run

log = logging.getLogger("nserlx")

EXIT_OK, EXIT_DOMAIN, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nserlx", description="Two-phase relaxation flow: analysis, simulation and decay experiments.")
    p.add_argument("--out-dir", default="./out", help="directory for all outputs (default ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="run the nonlinear solver from a config")
    s.add_argument("--config", required=True)

    s = sub.add_parser("decay", help="fit decay exponents against the rate table")
    s.add_argument("--config", required=True)
    s.add_argument("--kind", choices=("linear", "torus"), default=None, help="overrides the config's experiment key")

    s = sub.add_parser("fit", help="power-law fit of a CSV time series")
    s.add_argument("--input", required=True)
    s.add_argument("--time-column", default="t")
    s.add_argument("--columns", default=None, help="comma-separated value columns (default: all others)")
    s.add_argument("--window", default=None, help="lo:hi")

    s = sub.add_parser("analyze-symbol", help="eigenvalues of the linear symbol on a frequency grid")
    s.add_argument("--d", type=int, default=None)
    s.add_argument("--xi-grid", default=None)
    s.add_argument("--config", default=None)

    s = sub.add_parser("verify", help="run the identity and inequality suite")
    s.add_argument("--quick", action="store_true")

    s = sub.add_parser("norms", help="Besov norms of a spectral snapshot")
    s.add_argument("--snapshot", required=True)
    s.add_argument("--norm", action="append", default=None, help="group:band:s:r (repeatable)")
    return p


# -- subcommands ---------------------------------------------------------------


def _simulate(args, out: Path) -> int:
    cfg = parse_config(args.config)
    if not isinstance(cfg, SimConfig):
        raise ConfigError(f"{args.config}: simulate needs kind = simulate")
    text = Path(args.config).read_text(encoding="utf-8")
    manifest = RunManifest.start("simulate", text, __version__)
    mpath = out / "manifest.json"
    manifest.write(mpath)
    diag_path = out / (cfg.output or "diagnostics.ndjson")
    manifest.outputs.append(diag_path.name)
    snaps = out / "snapshots"

    def on_snapshot(t, hat):
        name = f"snap_{len(manifest.outputs):05d}.bin"
        write_snapshot(snaps / name, cfg.grid, hat, t)
        manifest.outputs.append(f"snapshots/{name}")

    status = "error"
    try:
        with NDJSONWriter(diag_path) as w:
            res = run(cfg, on_tick=w.write, on_snapshot=on_snapshot if cfg.snapshot_every else None)
        status = "ok"
    finally:
        manifest.finish(mpath, status)
    last = res.diagnostics[-1]
    print(f"simulate: {res.steps} steps, t = {last['t']!r}, X = {last['X']!r}, min(1+a) = {last['min_density']!r}")
    print(f"wrote {diag_path}")
    return EXIT_OK


def _decay(args, out: Path) -> int:
    cfg = parse_config(args.config)
    if not isinstance(cfg, ExperimentConfig):
        raise ConfigError(f"{args.config}: decay needs kind = decay")
    if args.kind is not None:
        exp = {"linear": "linear-continuum", "torus": "nonlinear-torus"}[args.kind]
        if exp == "nonlinear-torus" and cfg.grid is None:
            raise ConfigError(f"{args.config}: --kind torus needs N (and optionally L)")
        cfg = dataclasses.replace(cfg, experiment=exp)
    text = Path(args.config).read_text(encoding="utf-8")
    manifest = RunManifest.start("decay", text, __version__)
    mpath = out / "manifest.json"
    manifest.write(mpath)
    rep = decay_experiment(
        cfg.experiment,
        cfg.d,
        cfg.sigma0,
        cfg.requests,
        cfg.times,
        tol=cfg.tol,
        params=cfg.params,
        grid=cfg.grid,
        epsilon=cfg.epsilon,
        seed=cfg.seed,
        dt=cfg.dt,
    )
    rows = []
    for r in rep.rows:
        verdict = "info" if r.passed is None else ("pass" if r.passed else "fail")
        rows.append((r.quantity, r.sigma, "inf" if r.r == math.inf else 1, r.theory, r.fitted, r.delta, verdict))
    table = write_csv(out / "decay.csv", ("quantity", "sigma", "r", "theory", "fitted", "delta", "result"), rows)
    curves = []
    for name, (t, y) in rep.curves.items():
        curves.extend((name, ti, yi) for ti, yi in zip(t, y))
    cpath = write_csv(out / "curves.csv", ("series", "t", "norm"), curves)
    manifest.outputs += [table.name, cpath.name]
    manifest.finish(mpath, "ok")
    for row in rows:
        print(",".join(str(x) for x in row))
    return EXIT_OK if rep.all_passed else EXIT_DOMAIN


def _fit(args, out: Path) -> int:
    try:
        header, data = read_csv(args.input)
    except FileNotFoundError:
        print(f"fit: input file not found: {args.input}", file=sys.stderr)
        return EXIT_DOMAIN
    if args.time_column not in header:
        raise DomainError(f"time column {args.time_column!r} not in {header}")
    ti = header.index(args.time_column)
    cols = args.columns.split(",") if args.columns else [h for h in header if h != args.time_column]
    window = None
    if args.window:
        lo, hi = (float(x) for x in args.window.split(":"))
        window = (lo, hi)
    rows = []
    for c in cols:
        if c not in header:
            raise DomainError(f"column {c!r} not in {header}")
        f = fit_power_law(data[:, ti], data[:, header.index(c)], window)
        rows.append((c, f.exponent, f.intercept, f.window[0], f.window[1], f.r_squared, f.residual_max, f.samples))
    path = write_csv(
        out / "fit.csv", ("series", "exponent", "intercept", "t_lo", "t_hi", "r_squared", "residual_max", "samples"), rows
    )
    for r in rows:
        print(f"{r[0]}: exponent {r[1]!r} (r^2 = {r[5]!r})")
    print(f"wrote {path}")
    return EXIT_OK


def _analyze(args, out: Path) -> int:
    params = ModelParams()
    d = args.d
    xi_text = args.xi_grid
    if args.config:
        cfg = parse_config(args.config)
        if not isinstance(cfg, AnalysisConfig):
            raise ConfigError(f"{args.config}: analyze-symbol needs kind = analysis")
        params, d, xi = cfg.params, cfg.d, cfg.xi
    if d is None:
        d = 2
    if d not in (2, 3):
        raise ConfigError(f"--d must be 2 or 3, got {d}")
    if not args.config or xi_text:
        from .linear import parse_xi_grid

        try:
            xi = parse_xi_grid(xi_text or "log:1e-3:1e3:512")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    table = spectrum_table(xi, params)
    header = ["xi"] + [f"re_lambda_{i}" for i in range(1, 7)] + [f"im_lambda_{i}" for i in range(1, 7)]
    path = write_csv(out / f"symbol_d{d}.csv", header, table)
    print(f"wrote {path} ({len(xi)} frequencies, max Re lambda = {float(table[:, 1:7].max())!r})")
    return EXIT_OK


def _verify(args, out: Path) -> int:
    from .verification import run_all

    results = run_all(quick=args.quick)
    width = max(len(r.name) for r in results)
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        print(f"{tag}  {r.name:<{width}}  value={r.value!r}  limit={r.limit!r}  {r.seconds:.2f}s  {r.detail}")
    write_csv(
        out / "verify.csv",
        ("check", "value", "limit", "passed", "seconds"),
        [(r.name, r.value, r.limit, int(r.passed), r.seconds) for r in results],
    )
    return EXIT_OK if all(r.passed for r in results) else EXIT_DOMAIN


def _norms(args, out: Path) -> int:
    try:
        grid, t, hat = read_snapshot(args.snapshot)
    except FileNotFoundError:
        print(f"norms: snapshot not found: {args.snapshot}", file=sys.stderr)
        return EXIT_DOMAIN
    texts = args.norm or ["all:low:0:1", "all:high:0:1", "rel:low:0:1"]
    try:
        reqs = [NormRequest.parse(s) for s in texts]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bank = build_filter_bank(grid)
    groups = block_groups(hat, bank)
    rows = [(r.name, t, float(besov_from_blocks(groups[r.group], r.spec, bank.js))) for r in reqs]
    for name, _, v in rows:
        print(f"{name} = {v!r}")
    write_csv(out / "norms.csv", ("norm", "t", "value"), rows)
    return EXIT_OK


COMMANDS = {
    "simulate": _simulate,
    "decay": _decay,
    "fit": _fit,
    "analyze-symbol": _analyze,
    "verify": _verify,
    "norms": _norms,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        print(parser.format_help(), file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, VacuumError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
