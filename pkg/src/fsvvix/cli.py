"""Command line: price, calibrate, gmm, validate, report, figure.

Exit codes: 0 success, 2 validation failure, 3 input error, 4 numerical failure.
Errors are written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import math
import sys

import numpy as np

from . import dataio
from .errors import (ArbitrageError, ConvergenceError, FsvError, InfeasibleStartError, ModelKindError,
                     NonConvergence, OptimizationError, ParseError, SchemaError, SingularWeightError)
from .estimation.calibration import CalibSpec, calibrate
from .estimation.gmm import GmmSpec, gmm_estimate
from .mc import SimConfig, martingale_check, price_mc, vix_from_log_contract
from .pricing import Contract, price
from .vixmap import TAU, ModelKind, vix_squared

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4
MODEL_CHOICES = tuple(k.value for k in ModelKind)

__all__ = ["main", "main_exit", "build_parser", "validation_table"]


class ValidationFailed(Exception):
    pass


_NUMERICAL = (ConvergenceError, SingularWeightError, OptimizationError, NonConvergence, ArithmeticError,
              InfeasibleStartError)
_INPUT = (ParseError, SchemaError, ModelKindError, ArbitrageError, OSError, ValueError, KeyError)


def _exit_code(exc) -> int:
    if isinstance(exc, ValidationFailed):
        return EXIT_VALIDATION
    if isinstance(exc, _NUMERICAL):
        return EXIT_NUMERICAL
    return EXIT_INPUT


def _load_params(path, model):
    params = dataio.read_params(path)
    if model is not None and params.kind is not ModelKind.parse(model):
        raise ModelKindError(f"--model {model} but the parameter file is {params.kind.value}")
    return params


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (dt.date,)):
        return x.isoformat()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _write_rows(path, rows, columns):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in r.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()


# ---- subcommands ---------------------------------------------------------------

def cmd_price(args):
    params = _load_params(args.params, args.model)
    tau = args.tau / dataio.DAYS_PER_YEAR
    contract = (Contract.future(tau, rate=params.r) if args.future
                else Contract.call(args.strike, tau, rate=params.r))
    value = price(params, args.v0, contract)
    print(f"{value:.10g}")
    return EXIT_OK


def cmd_calibrate(args):
    quotes = dataio.ingest(args.quotes)
    date = dt.date.fromisoformat(args.date) if args.date else None
    inst = dataio.instruments_for_date(quotes, date)
    spec = CalibSpec(ModelKind.parse(args.model), n_restarts=args.restarts, seed=args.seed)
    result = calibrate(inst, spec)
    _write_json(args.out, result.to_dict())
    return EXIT_OK


def cmd_gmm(args):
    data = dataio.read_returns(args.returns)
    res = gmm_estimate(data, GmmSpec.named(args.spec), seed=args.seed)
    doc = res.to_dict()
    doc["schema_version"] = dataio.SCHEMA_VERSION
    _write_json(args.out, doc)
    return EXIT_OK


def validation_table(params, n_paths, seed, steps_per_year=779):
    """MC-versus-analytic checks: VIX^2 from the log contract, futures and calls, martingale."""
    rows = []
    v0 = params.cir.v0

    def add(name, analytic, mc, se, k):
        z = (mc - analytic) / se if se > 0 else (0.0 if mc == analytic else math.inf)
        rows.append({"check": name, "analytic": analytic, "mc": mc, "se": se, "z": z,
                     "limit": k, "pass": bool(abs(z) < k)})

    est = vix_from_log_contract(params, v0, SimConfig(n_paths, steps_per_year, TAU, seed=seed),
                                control_variate=True)
    add("vix2_log_contract", float(vix_squared(params, v0)), est.vix2, est.vix2_se, 3.0)
    contracts = [Contract.future(d / 365.0, rate=params.r) for d in (14, 28, 91)]
    f28 = float(price(params, v0, contracts[1]))
    strikes = f28 * np.linspace(0.7, 1.6, 10)
    contracts += [Contract.call(k, 28 / 365.0, rate=params.r) for k in strikes]
    mc, se = price_mc(params, v0, contracts, n_paths=n_paths, seed=seed + 1)
    for c, m, s in zip(contracts, mc, se):
        name = f"future_{c.maturity * 365:.0f}d" if c.strike is None else f"call_28d_K{c.strike:.2f}"
        add(name, float(price(params, v0, c)), float(m), float(s), 3.0)
    mart = martingale_check(params, SimConfig(n_paths, 256, 0.5, seed=seed + 2))
    add("martingale_T0.5", 1.0, mart.ratio, mart.stderr, 4.0)
    return rows


def cmd_validate(args):
    params = _load_params(args.params, args.model)
    rows = validation_table(params, args.paths, args.seed)
    w = csv.writer(sys.stdout)
    w.writerow(["check", "analytic", "mc", "se", "z", "limit", "pass"])
    for r in rows:
        w.writerow([r["check"], f"{r['analytic']:.8g}", f"{r['mc']:.8g}", f"{r['se']:.3g}",
                    f"{r['z']:.2f}", r["limit"], "PASS" if r["pass"] else "FAIL"])
    failed = [r["check"] for r in rows if not r["pass"]]
    if failed:
        raise ValidationFailed(f"checks outside their SE limits: {failed}")
    return EXIT_OK


def cmd_report(args):
    quotes = dataio.ingest(args.quotes)
    params = _load_params(args.params, None)
    rows = dataio.report_table(quotes, params)
    dataio.write_table(args.out, rows)
    return EXIT_OK


def cmd_figure(args):
    params = _load_params(args.params, None)
    if args.kind == "term-structure":
        rows = dataio.term_structure(params)
        cols = ["days", "tau", "future"]
    elif args.kind == "strike-profile":
        rows = dataio.strike_profile(params)
        cols = ["strike", "call"]
    else:
        rows = dataio.iv_curve(params)
        cols = ["days", "tau", "future", "strike", "call", "iv"]
    _write_rows(args.out, rows, cols)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsvvix", description="VIX futures and options under free-power volatility")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("price", help="price one future or call")
    s.add_argument("--model", choices=MODEL_CHOICES, required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--v0", type=float, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--future", action="store_true")
    g.add_argument("--call", action="store_true")
    s.add_argument("--strike", type=float)
    s.add_argument("--tau", type=float, required=True, help="days to expiry")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("calibrate", help="two-stage multi-start calibration")
    s.add_argument("--quotes", required=True)
    s.add_argument("--model", choices=MODEL_CHOICES, required=True)
    s.add_argument("--restarts", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--date", help="quote date to use (default: latest)")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("gmm", help="GMM estimation from index closes")
    s.add_argument("--returns", required=True)
    s.add_argument("--spec", choices=("unrestricted", "heston", "three-halves", "fsv"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_gmm)

    s = sub.add_parser("validate", help="Monte Carlo versus analytic checks")
    s.add_argument("--model", choices=MODEL_CHOICES, required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--paths", type=int, default=200_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("report", help="pricing-error grid by maturity and moneyness")
    s.add_argument("--quotes", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("figure", help="plot-ready series")
    s.add_argument("--kind", choices=("term-structure", "strike-profile", "iv-curve"), required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_figure)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; map those to input errors
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.command == "price" and args.call and args.strike is None:
        _report_error(ValueError("--call needs --strike"))
        return EXIT_INPUT
    try:
        return args.func(args)
    except (ValidationFailed, FsvError, *_INPUT, *_NUMERICAL) as exc:
        _report_error(exc)
        return _exit_code(exc)


def _report_error(exc):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": _exit_code(exc)}
    print(json.dumps(doc), file=sys.stderr)


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
