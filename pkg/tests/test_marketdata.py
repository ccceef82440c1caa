import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cirdiff.marketdata import (
    CURVE_HEADER,
    ExtrapolationError,
    QuoteError,
    QuoteSet,
    ZeroCurve,
    bootstrap,
    fixed_leg_schedule,
    load_quotes,
    market_forward_rate,
    market_forward_zcb,
    swap_par_rate,
    write_quotes,
    year_fraction,
)

DEPOS = (1 / 12, 0.25, 0.5, 1.0)
SWAPS = (2, 3, 4, 5, 7, 10, 15, 20, 25, 30)


def flat_quotes(c, swaps=SWAPS):
    """Deposit and swap quotes consistent with a flat continuously compounded rate c."""
    deps = tuple((t, (math.exp(c * t) - 1) / t) for t in DEPOS)
    sw = []
    for n in swaps:
        d = [math.exp(-c * i) for i in range(1, n + 1)]
        sw.append((float(n), (1 - d[-1]) / sum(d)))
    return QuoteSet(deps, tuple(sw))


def test_year_fraction():
    assert year_fraction(date(2019, 12, 30), date(2020, 12, 29)) == pytest.approx(365 / 365)
    assert year_fraction(date(2020, 1, 1), date(2020, 1, 1)) == 0.0


def test_load_quotes_schema_example(tmp_path):
    f = tmp_path / "q.csv"
    f.write_text("type,tenor_years,rate\nDEPO,0.5,-0.003\nSWAP,10,0.002\n")
    q = load_quotes(f, date(2019, 12, 30))
    assert q.deposits == ((0.5, -0.003),) and q.swaps == ((10.0, 0.002),)
    assert q.valuation_date == date(2019, 12, 30)


def test_load_quotes_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(QuoteError, match="no instruments"):
        load_quotes(empty)
    header_only = tmp_path / "h.csv"
    header_only.write_text("type,tenor_years,rate\n")
    with pytest.raises(QuoteError, match="no instruments"):
        load_quotes(header_only)
    unsorted = tmp_path / "u.csv"
    unsorted.write_text("type,tenor_years,rate\nSWAP,10,0.01\nSWAP,5,0.01\n")
    with pytest.raises(QuoteError, match=r"u\.csv:3"):
        load_quotes(unsorted)
    bad = tmp_path / "b.csv"
    bad.write_text("type,tenor_years,rate\nSWAP,ten,0.01\n")
    with pytest.raises(QuoteError, match=r"b\.csv:2"):
        load_quotes(bad)
    kind = tmp_path / "k.csv"
    kind.write_text("type,tenor_years,rate\nFRA,1,0.01\n")
    with pytest.raises(QuoteError, match="unknown instrument"):
        load_quotes(kind)
    with pytest.raises(QuoteError, match="duplicate"):
        QuoteSet(((1.0, 0.01),), ((1.0, 0.01),))
    with pytest.raises(QuoteError):
        QuoteSet(((1.0, math.inf),))


def test_quotes_write_read_round_trip(tmp_path):
    q = flat_quotes(0.01)
    write_quotes(q, tmp_path / "q.csv")
    assert load_quotes(tmp_path / "q.csv") == q


def test_single_zero_deposit():
    c = bootstrap(QuoteSet(((1.0, 0.0),)))
    assert c.discount(1.0) == 1.0 and c.zero_rate(1.0) == 0.0


@pytest.mark.parametrize("rate", [0.01, -0.005])
def test_flat_curve_recovered(rate):
    c = bootstrap(flat_quotes(rate))
    np.testing.assert_allclose(c.zero_rates, rate, atol=1e-10)
    mid = np.linspace(0.1, 29.9, 97)
    np.testing.assert_allclose(c.zero_rate(mid), rate, atol=1e-12)


def _reprice_errors(q, c):
    errs = [abs((1 / c.discount(t) - 1) / t - r) for t, r in q.deposits]
    errs += [abs(swap_par_rate(c, t) - r) for t, r in q.swaps]
    return max(errs)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(-0.01, 0.04),
    st.floats(-0.02, 0.02),
    st.floats(0.05, 0.5),
)
def test_bootstrap_reprices_instruments(level, slope, speed):
    # smooth, non-flat curve shapes with a hump; quotes priced off the analytic curve
    def d(t):
        return math.exp(-(level + slope * (1 - math.exp(-speed * t)) / (speed * t)) * t)

    deps = tuple((t, (1 / d(t) - 1) / t) for t in DEPOS)
    sw = tuple((float(n), (1 - d(n)) / sum(d(i) for i in range(1, n + 1))) for n in SWAPS)
    q = QuoteSet(deps, sw)
    c = bootstrap(q)
    assert _reprice_errors(q, c) < 1e-10
    assert np.all(c.discounts > 0)


def test_curve_pillar_identities():
    c = ZeroCurve(np.array([0.5, 1.0, 2.0, 5.0]), np.array([-0.002, 0.001, 0.004, 0.01]))
    assert c.discount(0.0) == 1.0
    for t, r, d in c.pillars():
        assert c.zero_rate(t) == r
        assert d == pytest.approx(math.exp(-r * t), rel=1e-14)
    with pytest.raises(ExtrapolationError):
        c.discount(5.5)


def test_curve_csv_round_trip(tmp_path):
    c = ZeroCurve(np.array([0.5, 1.0, 2.0, 5.0]), np.array([-0.002, 0.001, 0.004, 0.01]))
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == ",".join(CURVE_HEADER)
    back = ZeroCurve.read_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.maturities, c.maturities)
    np.testing.assert_array_equal(back.zero_rates, c.zero_rates)


def test_curve_rejects_unsorted():
    with pytest.raises(ValueError):
        ZeroCurve(np.array([1.0, 0.5]), np.array([0.0, 0.0]))


def test_fixed_leg_schedule():
    pays, accr = fixed_leg_schedule(0.0, 3.0)
    np.testing.assert_allclose(pays, [1, 2, 3])
    np.testing.assert_allclose(accr, [1, 1, 1])
    pays, accr = fixed_leg_schedule(1.0, 1.5, 2)
    np.testing.assert_allclose(pays, [1.5, 2.0, 2.5])
    pays, accr = fixed_leg_schedule(0.0, 2.5)
    np.testing.assert_allclose(pays, [0.5, 1.5, 2.5])  # stub at the front
    np.testing.assert_allclose(accr, [0.5, 1, 1])


def test_forward_rate_examples():
    flat = bootstrap(flat_quotes(0.01))
    assert market_forward_rate(flat, 2.0, 7.0) == pytest.approx(0.01, abs=1e-10)
    assert market_forward_zcb(flat, 1.0, 3.0) == pytest.approx(math.exp(-0.02), abs=1e-10)
    two = ZeroCurve(np.array([1.0, 2.0]), np.array([0.0, 0.01]))
    assert market_forward_rate(two, 1.0, 2.0) == pytest.approx(0.02, abs=1e-15)
    assert market_forward_rate(two, 0.0, 2.0) == pytest.approx(0.01, abs=1e-15)
    assert market_forward_zcb(two, 2.0 - 1e-9, 2.0) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        market_forward_rate(two, 2.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 29.0), st.floats(0.01, 1.0))
def test_forward_zcb_identity(t, frac):
    c = bootstrap(flat_quotes(-0.003))
    c = ZeroCurve(c.maturities, c.zero_rates + 0.001 * np.sin(c.maturities))
    T = t + frac * (30.0 - t)
    if T <= t:
        return
    d_t = 1.0 if t == 0 else c.discount(t)
    assert market_forward_zcb(c, t, T) * d_t == pytest.approx(c.discount(T), rel=1e-14)
