import csv
import datetime as dt

import numpy as np
import pytest

from fsvvix.cir import CirParams
from fsvvix.vixmap import ModelKind, ModelParams

# published calibrated parameter sets, v0 set to theta
TABLE = {
    "fsv-aj": ModelParams(CirParams(3.8943, 0.2121, 0.9115, 0.2121), 1.2156, ModelKind.FSV_AJ,
                          lambda1=0.0574, mu1=0.1125, lambda2=0.0648, mu2=-0.1232),
    "fsv-dj": ModelParams(CirParams(3.7029, 0.2036, 0.8662, 0.2036), 1.1575, ModelKind.FSV_DJ,
                          lambda2=0.0668, mu2=-0.1233),
    "svj32": ModelParams(CirParams(2.4614, 47.313, -11.075, 47.313), -0.5, ModelKind.SVJ32,
                         lambda1=0.0722, mu1=0.1518, lambda2=0.1203, mu2=-0.1896),
    "hsv": ModelParams(CirParams(3.1490, 0.0372, 1.0880, 0.0372), 0.5, ModelKind.HSV),
}


@pytest.fixture(params=sorted(TABLE))
def table_params(request):
    return TABLE[request.param]


@pytest.fixture
def aj():
    return TABLE["fsv-aj"]


def write_quote_csv(path, rows, header=("date", "instrument", "expiry", "strike", "bid", "ask", "vix_close", "rate")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    return path


def model_quote_rows(params, date=dt.date(2016, 3, 1), days=(14, 28, 49, 77, 112),
                     strikes=np.arange(12.0, 31.0, 2.0), half_spread=0.05):
    """Quote rows priced by the model at ``v0``; VIX close is the model VIX at ``v0``."""
    from fsvvix.pricing import Contract, price_many
    from fsvvix.vixmap import vix_squared

    v0 = params.cir.v0
    vix = float(np.sqrt(vix_squared(params, v0)))
    rows = []
    for d in days:
        exp = date + dt.timedelta(days=d)
        tau = d / 365.0
        cs = [Contract.future(tau, rate=params.r)] + [Contract.call(k, tau, rate=params.r) for k in strikes]
        ps = price_many(params, v0, cs)
        rows.append([date.isoformat(), "future", exp.isoformat(), "", ps[0] - half_spread, ps[0] + half_spread,
                     vix, params.r])
        for k, p in zip(strikes, ps[1:]):
            rows.append([date.isoformat(), "call", exp.isoformat(), k, max(p - half_spread, 0.0), p + half_spread,
                         vix, params.r])
    return rows


# acceptance results, echoed once more in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
