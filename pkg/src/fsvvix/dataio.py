"""Quote and returns files, parameter JSON, error-report grids and figure series."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FsvError, ParseError, SchemaError
from .estimation.calibration import Instruments
from .estimation.gmm import ReturnSeries
from .pricing import Contract, ContractKind, PriceQuote, error_metrics, implied_vol, price_many
from .vixmap import ModelParams, vix_squared

__all__ = [
    "QUOTE_HEADER",
    "RETURNS_HEADER",
    "PARAM_KEYS",
    "SCHEMA_VERSION",
    "MIN_OPTION_MID",
    "DEFAULT_RATE",
    "QuoteRecord",
    "FilterReport",
    "QuoteFile",
    "ingest",
    "write_quotes",
    "read_returns",
    "read_params",
    "write_params",
    "params_to_json",
    "maturity_bucket",
    "moneyness_bucket",
    "moneyness_value",
    "parse_params",
    "model_prices",
    "stationary_future",
    "instruments_for_date",
    "state_from_vix",
    "report_table",
    "write_table",
    "term_structure",
    "strike_profile",
    "iv_curve",
    "TERM_STRUCTURE_DAYS",
]

QUOTE_HEADER = ("date", "instrument", "expiry", "strike", "bid", "ask", "vix_close", "rate")
RETURNS_HEADER = ("date", "close")
PARAM_KEYS = ("kind", "kappa", "theta", "sigma", "alpha", "rho", "r", "v0", "lambda1", "mu1", "lambda2", "mu2")
SCHEMA_VERSION = 1
MIN_OPTION_MID = 2.0
DEFAULT_RATE = 0.0005
DAYS_PER_YEAR = 365.0
MATURITY_BUCKETS = ("Short", "Middle", "Long")
MONEYNESS_BUCKETS = ("OTM", "ATM", "ITM")
MONEYNESS_RULES = ("log", "ratio-minus-one", "raw")
# one and three months as year fractions
_ONE_MONTH, _THREE_MONTHS = 1.0 / 12.0, 3.0 / 12.0


def maturity_bucket(tau: float) -> str:
    if tau <= _ONE_MONTH:
        return "Short"
    if tau <= _THREE_MONTHS:
        return "Middle"
    return "Long"


def moneyness_value(vix: float, strike: float, rule: str = "log") -> float:
    """The bucketing statistic built from ``d = VIX/K``."""
    d = vix / strike
    if rule == "log":
        return math.log(d)
    if rule == "ratio-minus-one":
        return d - 1.0
    if rule == "raw":
        return d
    raise DomainError(f"unknown moneyness rule {rule!r}")


def moneyness_bucket(vix: float, strike: float, rule: str = "log") -> str:
    m = moneyness_value(vix, strike, rule)
    if m < -0.1:
        return "OTM"
    if m <= 0.1:
        return "ATM"
    return "ITM"


@dataclass(frozen=True)
class QuoteRecord:
    date: dt.date
    instrument: ContractKind
    expiry: dt.date
    strike: float | None
    bid: float
    ask: float
    vix_close: float
    rate: float = DEFAULT_RATE

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def tau(self) -> float:
        """ACT/365 year fraction from quote date to expiry."""
        return (self.expiry - self.date).days / DAYS_PER_YEAR

    @property
    def moneyness(self) -> float | None:
        """Raw ratio ``VIX/K`` (None for futures)."""
        return None if self.strike is None else self.vix_close / self.strike

    @property
    def maturity_bucket(self) -> str:
        return maturity_bucket(self.tau)

    def moneyness_bucket(self, rule: str = "log") -> str | None:
        return None if self.strike is None else moneyness_bucket(self.vix_close, self.strike, rule)

    def contract(self) -> Contract:
        if self.instrument is ContractKind.FUTURE:
            return Contract.future(self.tau, rate=self.rate)
        return Contract.call(self.strike, self.tau, rate=self.rate)

    def quote(self) -> PriceQuote:
        return PriceQuote(self.bid, self.ask)


@dataclass(frozen=True)
class FilterReport:
    total_rows: int = 0
    kept: int = 0
    discarded: dict = field(default_factory=dict)

    @property
    def n_discarded(self) -> int:
        return sum(self.discarded.values())


@dataclass(frozen=True)
class QuoteFile:
    records: tuple
    report: FilterReport
    moneyness_rule: str = "log"

    def bucket_counts(self) -> dict:
        """Counts per (instrument, maturity bucket, moneyness bucket)."""
        c = Counter((r.instrument.value, r.maturity_bucket, r.moneyness_bucket(self.moneyness_rule))
                    for r in self.records)
        return dict(c)

    @property
    def dates(self) -> tuple:
        return tuple(sorted({r.date for r in self.records}))


def _parse_date(text, line, name):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"bad {name} {text!r}, expected YYYY-MM-DD", line) from None


def _parse_float(text, line, name, allow_blank=False):
    text = text.strip()
    if text == "":
        if allow_blank:
            return None
        raise ParseError(f"missing {name}", line)
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"bad {name} {text!r}", line) from None
    if not math.isfinite(x):
        raise ParseError(f"{name} must be finite", line)
    return x


def _parse_row(row, line):
    date = _parse_date(row["date"], line, "date")
    try:
        kind = ContractKind(row["instrument"].strip().lower())
    except ValueError:
        raise ParseError(f"instrument must be 'future' or 'call', got {row['instrument']!r}", line) from None
    expiry = _parse_date(row["expiry"], line, "expiry")
    if expiry <= date:
        raise ParseError("expiry must be after the quote date", line)
    strike = _parse_float(row["strike"], line, "strike", allow_blank=True)
    if kind is ContractKind.CALL and (strike is None or strike <= 0):
        raise ParseError("calls need a positive strike", line)
    if kind is ContractKind.FUTURE and strike is not None:
        raise ParseError("futures must leave the strike blank", line)
    bid = _parse_float(row["bid"], line, "bid")
    ask = _parse_float(row["ask"], line, "ask")
    if not 0 <= bid <= ask:
        raise ParseError(f"need 0 <= bid <= ask, got {bid}, {ask}", line)
    vix = _parse_float(row["vix_close"], line, "vix_close")
    if vix <= 0:
        raise ParseError("vix_close must be positive", line)
    rate = _parse_float(row.get("rate") or "", line, "rate", allow_blank=True)
    return QuoteRecord(date, kind, expiry, strike, bid, ask, vix, DEFAULT_RATE if rate is None else rate)


def ingest(path, min_mid: float = MIN_OPTION_MID, moneyness_rule: str = "log") -> QuoteFile:
    """Read a quote CSV, drop calls whose mid is below ``min_mid``.

    The header must be the declared one; the trailing ``rate`` column may be
    omitted, in which case every row uses the default rate.
    """
    if moneyness_rule not in MONEYNESS_RULES:
        raise DomainError(f"unknown moneyness rule {moneyness_rule!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return QuoteFile((), FilterReport(), moneyness_rule)
        header = tuple(h.strip() for h in header)
        if header not in (QUOTE_HEADER, QUOTE_HEADER[:-1]):
            raise SchemaError(f"quote header must be {','.join(QUOTE_HEADER)}; got {','.join(header)}")
        kept, discarded, total = [], Counter(), 0
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            total += 1
            rec = _parse_row(dict(zip(header, row)), line)
            if rec.instrument is ContractKind.CALL and rec.mid < min_mid:
                discarded["mid_below_threshold"] += 1
                continue
            kept.append(rec)
    report = FilterReport(total_rows=total, kept=len(kept), discarded=dict(discarded))
    return QuoteFile(tuple(kept), report, moneyness_rule)


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_quotes(path, quotes: QuoteFile):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUOTE_HEADER)
        for r in quotes.records:
            w.writerow([r.date.isoformat(), r.instrument.value, r.expiry.isoformat(), _fmt(r.strike),
                        _fmt(r.bid), _fmt(r.ask), _fmt(r.vix_close), _fmt(r.rate)])


def read_returns(path, dt_years: float = 1.0 / 252.0) -> ReturnSeries:
    """Read ``date,close`` rows into a :class:`ReturnSeries`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise SchemaError("returns file is empty") from None
        if header != RETURNS_HEADER:
            raise SchemaError(f"returns header must be {','.join(RETURNS_HEADER)}; got {','.join(header)}")
        dates, closes = [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line)
            d = _parse_date(row[0], line, "date")
            c = _parse_float(row[1], line, "close")
            if c <= 0:
                raise ParseError("close must be positive", line)
            if dates and d <= dates[-1]:
                raise ParseError("dates must be strictly increasing", line)
            dates.append(d)
            closes.append(c)
    try:
        return ReturnSeries(tuple(dates), np.array(closes), dt_years)
    except DomainError as exc:
        raise SchemaError(str(exc)) from None


def params_to_json(params: ModelParams) -> str:
    d = {k: params.to_dict()[k] for k in PARAM_KEYS}
    d["schema_version"] = SCHEMA_VERSION
    return json.dumps(d, indent=2, sort_keys=True)


def write_params(path, params: ModelParams):
    with open(path, "w") as fh:
        fh.write(params_to_json(params) + "\n")


def parse_params(doc: dict) -> ModelParams:
    if not isinstance(doc, dict):
        raise SchemaError("parameter document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    # calibration results nest the parameter set under "params"
    if "params" in doc and isinstance(doc["params"], dict):
        doc = dict(doc["params"], schema_version=version)
    missing = [k for k in ("kind", "kappa", "theta", "sigma", "v0") if k not in doc]
    if missing:
        raise SchemaError(f"parameter document lacks {missing}")
    unknown = set(doc) - set(PARAM_KEYS) - {"schema_version", "gamma_diff"}
    if unknown:
        raise SchemaError(f"unknown parameter keys {sorted(unknown)}")
    try:
        return ModelParams.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc)) from None


def read_params(path) -> ModelParams:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    return parse_params(doc)


def state_from_vix(params: ModelParams, vix: float) -> float:
    """Variance state at which the model VIX equals ``vix``."""
    from .estimation.calibration import invert_vix_index

    return invert_vix_index(params, vix)


def instruments_for_date(quotes: QuoteFile, date: dt.date | None = None) -> Instruments:
    """Calibration instruments from the records of one date (latest by default)."""
    if not quotes.records:
        raise DomainError("no quotes to calibrate to")
    date = date or quotes.dates[-1]
    recs = [r for r in quotes.records if r.date == date]
    if not recs:
        raise DomainError(f"no quotes on {date}")
    return Instruments(recs[0].vix_close, tuple(r.contract() for r in recs), tuple(r.quote() for r in recs))


# ---- report grid ---------------------------------------------------------------

PANELS = ("All futures", "All options", "OTM", "ATM", "ITM")
COLUMNS = ("Short", "Middle", "Long", "All")


def model_prices(quotes: QuoteFile, params: ModelParams) -> np.ndarray:
    """Model price per record; the state on each date is implied by that date's VIX close."""
    out = np.empty(len(quotes.records))
    by_date = {}
    for i, r in enumerate(quotes.records):
        by_date.setdefault(r.date, []).append(i)
    for d, idx in by_date.items():
        v = state_from_vix(params, quotes.records[idx[0]].vix_close)
        contracts = [quotes.records[i].contract() for i in idx]
        out[idx] = price_many(params, v, contracts)
    return out


def report_table(quotes: QuoteFile, params: ModelParams, prices=None) -> list:
    """Rows ``{panel, metric, Short, Middle, Long, All}`` with ARPE, ARBAE, MAE and N.

    ARBAE is not reported for futures.
    """
    prices = model_prices(quotes, params) if prices is None else np.asarray(prices, float)
    recs = quotes.records
    rule = quotes.moneyness_rule

    def members(panel):
        if panel == "All futures":
            return [i for i, r in enumerate(recs) if r.instrument is ContractKind.FUTURE]
        opts = [i for i, r in enumerate(recs) if r.instrument is ContractKind.CALL]
        if panel == "All options":
            return opts
        return [i for i in opts if recs[i].moneyness_bucket(rule) == panel]

    rows = []
    for panel in PANELS:
        idx = members(panel)
        cells = {}
        for col in COLUMNS:
            sel = idx if col == "All" else [i for i in idx if recs[i].maturity_bucket == col]
            if sel:
                m = error_metrics(prices[sel], [recs[i].quote() for i in sel])
                m["n"] = len(sel)
            else:
                m = {"arpe": None, "arbae": None, "mae": None, "n": 0}
            if panel == "All futures":
                m["arbae"] = None
            cells[col] = m
        for metric in ("arpe", "arbae", "mae", "n"):
            rows.append({"panel": panel, "metric": metric, **{c: cells[c][metric] for c in COLUMNS}})
    return rows


def write_table(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("panel", "metric") + COLUMNS)
        for r in rows:
            vals = []
            for c in COLUMNS:
                v = r[c]
                vals.append("N/A" if v is None else (str(v) if r["metric"] == "n" else f"{v:.6g}"))
            w.writerow([r["panel"], r["metric"]] + vals)


# ---- figure series -------------------------------------------------------------

# nine maturities spanning the quoted range (1 to 268 days)
TERM_STRUCTURE_DAYS = (7, 14, 28, 49, 77, 105, 140, 196, 266)
FIGURE_STRIKES = tuple(float(k) for k in np.linspace(10.0, 70.0, 38))
FIGURE_TAU_DAYS = 28


def term_structure(params: ModelParams, days=TERM_STRUCTURE_DAYS, v0: float | None = None) -> list:
    """Rows ``{days, tau, future}`` plus the stationary limit as the last row (days = inf)."""
    v0 = params.cir.v0 if v0 is None else v0
    contracts = [Contract.future(d / DAYS_PER_YEAR, rate=params.r) for d in days]
    prices = price_many(params, v0, contracts)
    rows = [{"days": d, "tau": c.tau, "future": float(p)} for d, c, p in zip(days, contracts, prices)]
    rows.append({"days": math.inf, "tau": math.inf, "future": stationary_future(params)})
    return rows


def stationary_future(params: ModelParams) -> float:
    """``E[VIX]`` under the stationary Gamma law of the variance state."""
    from scipy import integrate, stats

    c = params.cir
    shape, scale = c.feller_ratio, c.sigma2 / (2.0 * c.kappa)
    law = stats.gamma(shape, scale=scale)

    def f(y):
        return math.sqrt(float(vix_squared(params, y))) * law.pdf(y)

    lo, hi = law.ppf(1e-14), law.isf(1e-14)
    mid = law.mean()
    val = integrate.quad(f, lo, mid, epsabs=0, epsrel=1e-11, limit=200)[0]
    val += integrate.quad(f, mid, hi, epsabs=0, epsrel=1e-11, limit=200)[0]
    return val


def strike_profile(params: ModelParams, strikes=FIGURE_STRIKES, days=FIGURE_TAU_DAYS,
                   v0: float | None = None) -> list:
    """Rows ``{strike, call}`` at one maturity."""
    v0 = params.cir.v0 if v0 is None else v0
    tau = days / DAYS_PER_YEAR
    contracts = [Contract.call(k, tau, rate=params.r) for k in strikes]
    prices = price_many(params, v0, contracts)
    return [{"strike": float(k), "call": float(p)} for k, p in zip(strikes, prices)]


def iv_curve(params: ModelParams, days=TERM_STRUCTURE_DAYS, v0: float | None = None) -> list:
    """At-the-money (K = future) Black-76 implied volatility per maturity."""
    v0 = params.cir.v0 if v0 is None else v0
    rows = []
    for d in days:
        tau = d / DAYS_PER_YEAR
        f = float(price_many(params, v0, [Contract.future(tau, rate=params.r)])[0])
        c = float(price_many(params, v0, [Contract.call(f, tau, rate=params.r)])[0])
        try:
            iv = implied_vol(c, f, f, tau, params.r)
        except FsvError:
            iv = math.nan
        rows.append({"days": d, "tau": tau, "future": f, "strike": f, "call": c, "iv": iv})
    return rows

