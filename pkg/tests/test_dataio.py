import datetime as dt
import json
import math

import numpy as np
import pytest

from conftest import TABLE, model_quote_rows, write_quote_csv
from fsvvix import dataio
from fsvvix.errors import ParseError, SchemaError
from fsvvix.pricing import ContractKind

D = "2016-03-01"

# hand-labelled rows: (row, expected maturity bucket, expected moneyness bucket or None)
LABELLED = [
    ([D, "future", "2016-03-16", "", 18.0, 18.1, 17.5, 0.001], "Short", None),
    ([D, "future", "2016-04-20", "", 19.0, 19.1, 17.5, 0.001], "Middle", None),
    ([D, "future", "2016-07-20", "", 20.0, 20.2, 17.5, ""], "Long", None),
    ([D, "call", "2016-03-16", 14.0, 3.9, 4.1, 17.5, 0.001], "Short", "ITM"),     # log(17.5/14) = 0.223
    ([D, "call", "2016-03-16", 17.0, 2.0, 2.2, 17.5, 0.001], "Short", "ATM"),
    ([D, "call", "2016-03-16", 20.0, 1.9, 2.0, 17.5, 0.001], None, None),         # mid 1.95 is discarded
    ([D, "call", "2016-04-20", 16.0, 4.0, 4.2, 17.5, 0.001], "Middle", "ATM"),    # 0.0896
    ([D, "call", "2016-04-20", 19.5, 2.5, 2.7, 17.5, 0.001], "Middle", "OTM"),    # -0.108
    ([D, "call", "2016-04-20", 15.0, 4.9, 5.1, 17.5, 0.001], "Middle", "ITM"),    # 0.154
    ([D, "call", "2016-07-20", 17.5, 3.5, 3.7, 17.5, 0.001], "Long", "ATM"),
    ([D, "call", "2016-07-20", 25.0, 2.1, 2.3, 17.5, 0.001], "Long", "OTM"),
    ([D, "call", "2016-03-31", 15.0, 2.9, 3.1, 17.5, 0.001], "Short", "ITM"),     # 30 days is Short
]


@pytest.fixture
def labelled(tmp_path):
    return write_quote_csv(tmp_path / "q.csv", [r for r, _, _ in LABELLED])


def test_ingest_labels(labelled):
    q = dataio.ingest(labelled)
    assert q.report.total_rows == 12 and q.report.kept == 11
    assert q.report.discarded == {"mid_below_threshold": 1}
    expected = [(m, k) for _, m, k in LABELLED if m is not None]
    got = [(r.maturity_bucket, r.moneyness_bucket()) for r in q.records]
    assert got == expected
    assert q.records[2].rate == dataio.DEFAULT_RATE
    assert q.bucket_counts()[("call", "Middle", "ATM")] == 1


def test_mid_threshold_is_inclusive(tmp_path):
    p = write_quote_csv(tmp_path / "q.csv", [[D, "call", "2016-04-01", 20.0, 1.95, 2.05, 17.0, 0.0]])
    assert dataio.ingest(p).report.kept == 1


def test_moneyness_rules():
    assert dataio.moneyness_value(22.0, 20.0, "log") == pytest.approx(math.log(1.1))
    assert dataio.moneyness_value(22.0, 20.0, "ratio-minus-one") == pytest.approx(0.1)
    assert dataio.moneyness_value(22.0, 20.0, "raw") == pytest.approx(1.1)
    # the raw ratio is positive, so it only reaches ATM when VIX/K <= 0.1
    assert dataio.moneyness_bucket(10.0, 40.0, "raw") == "ITM"
    assert dataio.moneyness_bucket(3.0, 40.0, "raw") == "ATM"


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    q = dataio.ingest(p)
    assert q.records == () and q.report.total_rows == 0


def test_header_only(tmp_path):
    q = dataio.ingest(write_quote_csv(tmp_path / "h.csv", []))
    assert q.records == ()


def test_bad_header(tmp_path):
    p = write_quote_csv(tmp_path / "b.csv", [], header=("date", "kind", "expiry"))
    with pytest.raises(SchemaError):
        dataio.ingest(p)


@pytest.mark.parametrize("row", [
    [D, "future", "2016-03-16", "", "abc", 18.1, 17.5, 0.0],
    [D, "put", "2016-03-16", 10, 1.0, 1.1, 17.5, 0.0],
    [D, "call", "2016-02-16", 10, 5.0, 5.1, 17.5, 0.0],
    [D, "call", "2016-03-16", "", 5.0, 5.1, 17.5, 0.0],
    [D, "future", "2016-03-16", 15, 5.0, 5.1, 17.5, 0.0],
    [D, "call", "2016-03-16", 10, 5.2, 5.1, 17.5, 0.0],
    ["2016-13-01", "call", "2016-03-16", 10, 5.0, 5.1, 17.5, 0.0],
    [D, "call", "2016-03-16", 10, 5.0, 5.1, -1.0, 0.0],
    [D, "call", "2016-03-16", 10, 5.0, 5.1],
])
def test_parse_error_reports_line(tmp_path, row):
    good = [D, "future", "2016-03-16", "", 18.0, 18.1, 17.5, 0.0]
    p = write_quote_csv(tmp_path / "p.csv", [good, good, row])
    with pytest.raises(ParseError) as exc:
        dataio.ingest(p)
    assert exc.value.line == 4
    assert "line 4" in str(exc.value)


def test_ingest_write_ingest_idempotent(labelled, tmp_path):
    q1 = dataio.ingest(labelled)
    dataio.write_quotes(tmp_path / "w1.csv", q1)
    q2 = dataio.ingest(tmp_path / "w1.csv")
    dataio.write_quotes(tmp_path / "w2.csv", q2)
    assert q1.records == q2.records
    assert (tmp_path / "w1.csv").read_text() == (tmp_path / "w2.csv").read_text()


def test_params_round_trip(tmp_path, table_params):
    path = tmp_path / "p.json"
    dataio.write_params(path, table_params)
    doc = json.loads(path.read_text())
    assert doc["schema_version"] == dataio.SCHEMA_VERSION
    assert set(doc) == set(dataio.PARAM_KEYS) | {"schema_version"}
    assert dataio.read_params(path) == table_params


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("schema_version"),
    lambda d: d.update(schema_version=99),
    lambda d: d.pop("kappa"),
    lambda d: d.update(extra=1.0),
    lambda d: d.update(kind="rough"),
])
def test_params_schema_errors(tmp_path, aj, mutate):
    doc = json.loads(dataio.params_to_json(aj))
    mutate(doc)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        dataio.read_params(path)


def test_params_invalid_json(tmp_path):
    path = tmp_path / "p.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        dataio.read_params(path)


def test_returns_reader(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("date,close\n2016-01-04,100\n2016-01-05,101\n2016-01-06,99.5\n")
    r = dataio.read_returns(path)
    assert len(r.closes) == 3
    path.write_text("date,close\n2016-01-05,100\n2016-01-04,101\n")
    with pytest.raises(ParseError):
        dataio.read_returns(path)
    path.write_text("day,price\n")
    with pytest.raises(SchemaError):
        dataio.read_returns(path)


def test_state_from_vix_round_trip(table_params):
    from fsvvix.vixmap import vix_squared

    v = table_params.cir.theta * 0.7
    vix = math.sqrt(float(vix_squared(table_params, v)))
    assert dataio.state_from_vix(table_params, vix) == pytest.approx(v, rel=1e-8)


def test_instruments_for_date(tmp_path, aj):
    rows = model_quote_rows(aj, days=(28,), strikes=np.array([14.0, 18.0]))
    rows += model_quote_rows(aj, date=dt.date(2016, 3, 2), days=(28,), strikes=np.array([16.0]))
    q = dataio.ingest(write_quote_csv(tmp_path / "q.csv", rows))
    inst = dataio.instruments_for_date(q)
    assert len(inst.contracts) == 2
    inst = dataio.instruments_for_date(q, dt.date(2016, 3, 1))
    assert len(inst.contracts) == 3


def test_report_totals_consistent(tmp_path, aj):
    q = dataio.ingest(write_quote_csv(tmp_path / "q.csv", model_quote_rows(aj, days=(14, 49, 112))))
    rows = dataio.report_table(q, aj)
    n = {r["panel"]: r for r in rows if r["metric"] == "n"}
    for panel in dataio.PANELS:
        assert n[panel]["All"] == n[panel]["Short"] + n[panel]["Middle"] + n[panel]["Long"]
    assert n["All options"]["All"] == n["OTM"]["All"] + n["ATM"]["All"] + n["ITM"]["All"]
    assert n["All futures"]["All"] == 3
    arbae = [r for r in rows if r["panel"] == "All futures" and r["metric"] == "arbae"][0]
    assert all(arbae[c] is None for c in dataio.COLUMNS)
    # quotes were generated from the same model and state, so every model price is inside its spread
    assert all(r["All"] == pytest.approx(0.0, abs=1e-6) for r in rows
               if r["metric"] == "arbae" and r["panel"] != "All futures" and r["All"] is not None)
    out = tmp_path / "t.csv"
    dataio.write_table(out, rows)
    text = out.read_text().splitlines()
    assert text[0] == "panel,metric,Short,Middle,Long,All"
    assert text[2].startswith("All futures,arbae,N/A")


def test_term_structure_series(aj):
    rows = dataio.term_structure(aj)
    assert len(rows) == 10 and math.isinf(rows[-1]["days"])
    f = [r["future"] for r in rows]
    assert np.all(np.diff(f[:-1]) > 0)
    assert abs(f[-2] - f[-1]) < abs(f[0] - f[-1])


def test_stationary_future_independent_of_start(aj):
    far = dataio.term_structure(aj.with_v0(aj.cir.theta * 3), days=(3650,))
    assert far[0]["future"] == pytest.approx(far[1]["future"], rel=1e-6)


def test_strike_profile_series(aj):
    rows = dataio.strike_profile(aj)
    assert len(rows) == 38
    c = np.array([r["call"] for r in rows])
    assert np.all(np.diff(c) < 0) and np.all(np.diff(c, 2) > -1e-10)


def test_iv_curve_series(aj):
    rows = dataio.iv_curve(aj, days=(14, 77))
    assert [r["days"] for r in rows] == [14, 77]
    assert all(0.1 < r["iv"] < 3.0 for r in rows)
    assert rows[0]["strike"] == rows[0]["future"]


def test_hsv_term_structure_dips_from_a_low_state():
    # with the Feller condition badly violated, dispersion of the variance lowers E[VIX]
    # at short maturities before mean reversion lifts it toward the stationary level
    p = TABLE["hsv"]
    f = [r["future"] for r in dataio.term_structure(p, v0=0.5 * p.cir.theta)]
    assert f[1] < f[0] and f[2] < f[1] and f[-2] > f[0]
