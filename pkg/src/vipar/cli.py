"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
Set ``VIPAR_LOG`` (DEBUG, INFO, WARNING, ...) for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from vipar.measures import (
    DomainError,
    EffectVector,
    ProbTable,
    RiskPair,
    TargetPair,
    check_rr_sr_feasible,
    forward_gop,
    forward_rr_op,
    rbc_risk,
    rr_sr_witness_interval,
    solve_gop,
    solve_rr_op,
    table_from_root,
)
from vipar.regression import (
    Dataset,
    FitConfig,
    GopRegressionModel,
    SchemaError,
    fit_gop,
    fit_rr_op,
)
from vipar.rootfind import BracketError, ConvergenceError, SolverConfig
from vipar.simulate import (
    DgpConfig,
    log_grid,
    rbc_region,
    simulate_dataset,
    sweep_gop_independence,
    sweep_rr_sr,
)

log = logging.getLogger("vipar")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

GOP_MEASURES = ("rr0", "or10", "rr11", "gop")
GOP_CELLS = ("p00", "p01", "p10", "p11")
RR_MEASURES = ("rr", "op")
RR_CELLS = ("p1", "p0")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# output helpers


def _fmt_csv(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    return f"{v:.9g}"


def _emit(records, fmt, out, columns):
    """Write a list of flat dicts as JSON (one object or a list) or CSV."""
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        if fmt == "json":
            payload = records[0] if len(records) == 1 else records
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        else:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in records:
                w.writerow([_fmt_csv(r[c]) for c in columns])
    finally:
        if out:
            fh.close()


def _read_rows(path, columns):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, header required")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for line, r in enumerate(reader, start=2):
            try:
                rows.append([float(r[c]) for c in columns])
            except (TypeError, ValueError):
                raise SchemaError(f"{path}:{line}: non-numeric value") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _solver_cfg(args):
    kw = {}
    if getattr(args, "tol", None) is not None:
        kw["abs_tol_x"] = args.tol
        kw["abs_tol_f"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter"] = args.max_iter
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# subcommands


def cmd_forward(args):
    if args.gop is not None or (args.input and args.mode == "gop"):
        rows = [args.gop] if args.gop is not None else _read_rows(args.input, GOP_CELLS)
        recs = [dict(zip(GOP_MEASURES, forward_gop(ProbTable(*r)).as_tuple())) for r in rows]
        columns = GOP_MEASURES
    else:
        rows = [args.rr_op] if args.rr_op is not None else _read_rows(args.input, RR_CELLS)
        recs = [dict(zip(RR_MEASURES, forward_rr_op(RiskPair(*r)).as_tuple())) for r in rows]
        columns = RR_MEASURES
    _emit(recs, args.format, args.out, columns)
    return EXIT_OK


def _checked(build, target):
    # valid measures whose table rounds onto 0 or 1 are a numerical failure, not bad input
    try:
        return build()
    except DomainError as exc:
        raise BracketError(f"{exc.field} is within double-precision rounding of 0 or 1 for {target}") from None


def cmd_invert(args):
    cfg = _solver_cfg(args)
    if args.gop is not None or (args.input and args.mode == "gop"):
        rows = [args.gop] if args.gop is not None else _read_rows(args.input, GOP_MEASURES)
        recs = []
        for r in rows:
            c = EffectVector(*r)
            res = solve_gop(c, cfg)
            table = _checked(lambda: table_from_root(res.root, c), c)
            recs.append({**dict(zip(GOP_CELLS, table.as_tuple())),
                         "iterations": res.iterations, "residual": res.residual,
                         "converged": res.converged})
        columns = GOP_CELLS
    else:
        rows = [args.rr_op] if args.rr_op is not None else _read_rows(args.input, RR_MEASURES)
        recs = []
        for r in rows:
            t = TargetPair(*r)
            res = solve_rr_op(t, cfg)
            pair = _checked(lambda: RiskPair(t.rr * res.root, res.root), t)
            recs.append({"p1": pair.p1, "p0": pair.p0,
                         "iterations": res.iterations, "residual": res.residual,
                         "converged": res.converged})
        columns = RR_CELLS
    _emit(recs, args.format, args.out, columns + ("iterations", "residual", "converged"))
    return EXIT_OK


def cmd_feasible(args):
    if args.rr_sr is not None:
        r, s = args.rr_sr
        lo, hi = rr_sr_witness_interval(r, s)
        rec = {"r": float(r), "s": float(s), "feasible": check_rr_sr_feasible(r, s),
               "p01_lo": lo, "p01_hi": hi}
        columns = ("r", "s", "feasible", "p01_lo", "p01_hi")
    else:
        a, b = args.rbc
        r0 = rbc_risk(a, b, 0)
        r1 = rbc_risk(a, b, 1)
        rec = {"alpha": float(a), "beta": float(b), "risk_trt0": r0, "risk_trt1": r1,
               "valid": r0 is not None and r1 is not None}
        columns = ("alpha", "beta", "risk_trt0", "risk_trt1", "valid")
    _emit([rec], args.format, args.out, columns)
    return EXIT_OK


def cmd_fit(args):
    two_arm = {"auto": None, "gop": False, "rr-op": True}[args.mode]
    data = Dataset.from_csv(args.data, two_arm=two_arm)
    kw = {"solver": _solver_cfg(args), "method": args.method}
    if args.grad_tol is not None:
        kw["grad_tol"] = args.grad_tol
    if args.fit_max_iter is not None:
        kw["max_iter"] = args.fit_max_iter
    if args.nuisance_terms is not None:
        kw["nuisance_terms"] = args.nuisance_terms
    try:
        cfg = FitConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = fit_rr_op(data, cfg) if data.two_arm else fit_gop(data, cfg)
    report = result.to_dict()
    report["columns"] = list(data.columns)
    report["n"] = data.n
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    finally:
        if args.out:
            fh.close()
    return EXIT_OK if result.converged else EXIT_NUMERIC


SIM_KEYS = ("n", "seed", "l0", "l0_q", "a0_coef", "a1_coef", "beta1", "beta2", "beta3", "beta4")


def _sim_config(args):
    conf = {}
    if args.config:
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(conf) - set(SIM_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in SIM_KEYS:
        v = getattr(args, key)
        if v is not None:
            conf[key] = v
    if "n" not in conf:
        raise UsageError("--n is required")
    try:
        model = GopRegressionModel(*(conf.get(f"beta{j}", [0.0, 0.0]) for j in range(1, 5)))
        return DgpConfig(
            n=conf["n"],
            seed=conf.get("seed", 0),
            l0_dist=conf.get("l0", "bernoulli"),
            l0_q=conf.get("l0_q", 0.5),
            a0_model=tuple(conf.get("a0_coef", (0.0, 0.0))),
            a1_model=tuple(conf.get("a1_coef", (0.0, 0.0, 0.0))),
            outcome_model=model,
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args):
    cfg = _sim_config(args)
    data = simulate_dataset(cfg)
    data.to_csv(args.out or sys.stdout)
    log.info("simulated %d rows (seed %d)", data.n, cfg.seed)
    return EXIT_OK


def cmd_sweep(args):
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if args.kind == "gop":
        lo, hi = args.log_range if args.log_range else (-2.0, 2.0)
        if not hi >= lo:
            raise UsageError("--log-range needs LO <= HI")
        report = sweep_gop_independence(log_grid(lo, hi, args.steps), cfg=_solver_cfg(args))
    elif args.kind == "rr-sr":
        r_max = args.r_max if args.r_max is not None else args.max
        s_max = args.s_max if args.s_max is not None else args.max
        if not (r_max > 0 and s_max > 0):
            raise UsageError("grid bounds must be positive")
        report = sweep_rr_sr(r_max, s_max, args.steps)
    else:
        lo, hi = args.range if args.range else (-2.0, 2.0)
        if not hi >= lo:
            raise UsageError("--range needs LO <= HI")
        grid = np.linspace(lo, hi, args.steps)
        report = rbc_region(grid, grid)
    if args.out:
        report.to_csv(args.out)
    if args.summary:
        report.to_json(args.summary)
    json.dump(report.summary(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


# --------------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    return v


def build_parser():
    p = _Parser(prog="vipar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def io_opts(sp):
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out", help="write output here instead of stdout")

    def solver_opts(sp):
        sp.add_argument("--tol", type=float, help="absolute tolerance in u and in the residual")
        sp.add_argument("--max-iter", type=int, help="bisection iteration cap")

    f = sub.add_parser("forward", help="cell risks -> effect measures")
    g = f.add_mutually_exclusive_group(required=True)
    g.add_argument("--gop", nargs=4, type=float, metavar=("P00", "P01", "P10", "P11"))
    g.add_argument("--rr-op", nargs=2, type=float, metavar=("P1", "P0"))
    g.add_argument("--input", help="CSV with columns p00,p01,p10,p11 (or p1,p0 with --mode rr-op)")
    f.add_argument("--mode", choices=("gop", "rr-op"), default="gop", help="layout of --input")
    io_opts(f)
    f.set_defaults(func=cmd_forward)

    i = sub.add_parser("invert", help="effect measures -> cell risks")
    g = i.add_mutually_exclusive_group(required=True)
    g.add_argument("--gop", nargs=4, type=float, metavar=("RR0", "OR10", "RR11", "GOP"))
    g.add_argument("--rr-op", nargs=2, type=float, metavar=("RR", "OP"))
    g.add_argument("--input", help="CSV with columns rr0,or10,rr11,gop (or rr,op with --mode rr-op)")
    i.add_argument("--mode", choices=("gop", "rr-op"), default="gop", help="layout of --input")
    solver_opts(i)
    io_opts(i)
    i.set_defaults(func=cmd_invert)

    fe = sub.add_parser("feasible", help="feasibility of variation-dependent parameter pairs")
    g = fe.add_mutually_exclusive_group(required=True)
    g.add_argument("--rr-sr", nargs=2, type=float, metavar=("R", "S"),
                   help="risk ratio RR0 and survival ratio SR11")
    g.add_argument("--rbc", nargs=2, type=float, metavar=("ALPHA", "BETA"),
                   help="coefficients of the scaled-risk model on Ber(1/2)")
    io_opts(fe)
    fe.set_defaults(func=cmd_feasible)

    ft = sub.add_parser("fit", help="maximum-likelihood fit from a CSV dataset")
    ft.add_argument("data", help="CSV with header; y, a0 (and a1) plus numeric covariates")
    ft.add_argument("--mode", choices=("auto", "gop", "rr-op"), default="auto")
    ft.add_argument("--nuisance-terms", nargs="*",
                    help="design columns entering the nuisance model (default: all)")
    ft.add_argument("--grad-tol", type=float)
    ft.add_argument("--fit-max-iter", type=int)
    ft.add_argument("--method", choices=("bfgs", "gd"), default="bfgs")
    ft.add_argument("--seed", type=int, help="accepted for interface symmetry; fitting is deterministic")
    solver_opts(ft)
    ft.add_argument("--out", help="write the JSON report here")
    ft.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a dataset from the sequential-treatment DAG")
    s.add_argument("--config", help="JSON file with any of: " + ", ".join(SIM_KEYS))
    s.add_argument("--n", type=_positive_int)
    s.add_argument("--seed", type=int)
    s.add_argument("--l0", choices=("bernoulli", "uniform"))
    s.add_argument("--l0-q", type=float)
    s.add_argument("--a0-coef", nargs=2, type=float, metavar=("B0", "B_L0"))
    s.add_argument("--a1-coef", nargs=3, type=float, metavar=("B0", "B_L0", "B_A0"))
    for j, name in enumerate(("log RR0", "log OR10", "log RR11", "log GOP"), start=1):
        s.add_argument(f"--beta{j}", nargs=2, type=float, metavar=("B0", "B_L0"),
                       help=f"coefficients of {name} on (1, l0)")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="grid sweeps: surjectivity and feasibility regions")
    sw.add_argument("--kind", choices=("gop", "rr-sr", "rbc"), required=True)
    sw.add_argument("--steps", type=_positive_int, required=True)
    sw.add_argument("--log-range", nargs=2, type=float, metavar=("LO", "HI"))
    sw.add_argument("--max", type=float, default=4.0)
    sw.add_argument("--r-max", type=float)
    sw.add_argument("--s-max", type=float)
    sw.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    solver_opts(sw)
    sw.add_argument("--out", help="per-cell CSV")
    sw.add_argument("--summary", help="write the JSON summary here as well")
    sw.set_defaults(func=cmd_sweep)
    return p


def _configure_logging():
    level = os.environ.get("VIPAR_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"vipar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"vipar: invalid {exc.field}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SchemaError as exc:
        print(f"vipar: bad dataset: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, BracketError) as exc:
        print(f"vipar: solver failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"vipar: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
