"""
Acceptance suite. Each test appends one "PASS criterion N: ..." or
"FAIL criterion N: ..." line to the terminal summary, then asserts.

Criteria that need the market curves of the two valuation dates run their
conditional part only when CIRDIFF_MARKET_DATA points at a directory holding
curve_2019-12-30.csv and curve_2020-11-30.csv (ZeroCurve CSV format).
"""

import json
import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from oracles import TABLE, riccati_rk4, textbook_cir

from cirdiff import (
    CirParams,
    PhiTriple,
    SimConfig,
    bond_factors,
    calibrate,
    cond_mean,
    cond_var,
    discount_factors,
    feller_check,
    phi_from_model,
    simulate,
    zcb_price,
)
from cirdiff.calibration import synthetic_curve
from cirdiff.cli import EXIT_OK, main
from cirdiff.marketdata import ZeroCurve
from cirdiff.model import model_from_phi, riccati_residual
from cirdiff.pricing import (
    SwaptionSpec,
    bachelier_price,
    load_swaption_market,
    model_forward_zcb,
    model_swaption_price,
)

DEMO = Path(__file__).resolve().parents[1] / "demos" / "data"
PILLARS = np.array([1 / 12, 0.25, 0.5] + list(range(1, 13)) + [15, 20, 25, 30], dtype=float)


def market_curve(date):
    root = os.environ.get("CIRDIFF_MARKET_DATA")
    if not root:
        return None
    path = Path(root) / f"curve_{date}.csv"
    return ZeroCurve.read_csv(path) if path.exists() else None


def report(emit, n, ok, text):
    emit(f"{'PASS' if ok else 'FAIL'} criterion {n}: {text}")
    return ok


# ---------------------------------------------------------------------------

def test_criterion_01_round_trip(acceptance_line):
    # every ratio constraint kept at least 1% from its boundary: near the
    # y-leg discriminant the map is ill conditioned like (k / phi1)^2
    rng = np.random.default_rng(2024)
    n = 10_000
    worst = 0.0
    t0 = time.perf_counter()
    for leg in ("x", "y"):
        big = rng.uniform(1e-3, 5.0, n)
        s = rng.uniform(0.5 + 1e-2, 1 - 1e-2, n) if leg == "x" else rng.uniform(1e-2, 1 - 1e-2, n)
        phi3 = rng.uniform(1.0, 20.0, n)
        for a, b, c in zip(big, s * big, phi3):
            p1, p2 = (a, b) if leg == "x" else (b, a)
            t = PhiTriple(p1, p2, c, leg)
            back = phi_from_model(model_from_phi(t), leg).as_tuple()
            worst = max(worst, max(abs(u - v) / abs(v) for u, v in zip(back, (p1, p2, c))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 1.0
    report(acceptance_line, 1, ok, f"round trip 2x10^4 triples, max rel err {worst:.2e} (<1e-10), {elapsed:.2f}s (<1s)")
    assert ok


def test_criterion_02_closed_form(acceptance_line):
    t0 = time.perf_counter()
    taus = np.linspace(0.05, 30.0, 600)
    err_text, err_rk4 = 0.0, 0.0
    for date in TABLE:
        k, s, th, _ = TABLE[date]["x"]
        f = bond_factors(phi_from_model(CirParams(k, s, th), "x"), taus)
        for i, tau in enumerate(taus):
            a, b = textbook_cir(k, s, th, tau)
            err_text = max(err_text, abs(f.a[i] / a - 1), abs(f.b[i] / b - 1))
        for leg in ("x", "y"):
            k, s, th, _ = TABLE[date][leg]
            grid = np.array([0.01, 0.1, 0.5, 1, 2, 5, 10, 15, 20, 25, 30.0])
            a, b = riccati_rk4(k, s, th, leg, grid, h=1e-3)
            f = bond_factors(phi_from_model(CirParams(k, s, th), leg), grid)
            err_rk4 = max(err_rk4, np.max(np.abs(f.a / a - 1)), np.max(np.abs(f.b / b - 1)))
    elapsed = time.perf_counter() - t0
    ok = err_text < 1e-12 and err_rk4 < 1e-6 and elapsed < 10
    report(acceptance_line, 2, ok,
           f"textbook CIR rel {err_text:.1e} (<1e-12), RK4 both legs rel {err_rk4:.1e} (<1e-6), {elapsed:.2f}s")
    assert ok


def test_criterion_03_riccati_residuals(acceptance_line):
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 30.0, 120)
    worst = 0.0
    for date in TABLE:
        for leg in ("x", "y"):
            t = phi_from_model(CirParams(*TABLE[date][leg][:3]), leg)
            worst = max(worst, float(np.max(np.abs(riccati_residual(t, grid)))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 5
    report(acceptance_line, 3, ok, f"max Riccati residual {worst:.1e} over 120 points x 4 legs (<1e-6), {elapsed:.2f}s")
    assert ok


def test_criterion_04_table_values(acceptance_line):
    worst, feller = 0.0, True
    for date in TABLE:
        for leg in ("x", "y"):
            p = CirParams(*TABLE[date][leg][:3])
            got = phi_from_model(p, leg).as_tuple()
            worst = max(worst, max(abs(u - v) for u, v in zip(got, TABLE[date][f"phi_{leg}"])))
            feller &= feller_check(p)[0]
    ok = worst < 1e-4 and feller
    report(acceptance_line, 4, ok, f"table phi max abs err {worst:.1e} (<1e-4), Feller on 4 legs: {feller}")
    assert ok


def test_criterion_05_mc_discount(acceptance_line, model_2019, paths_2019):
    # seed 0 is the package default and was fixed before looking at results;
    # at M = 10^4 the 5y standard error is about as large as the 0.005 bound
    m = model_2019
    t0 = time.perf_counter()
    mats = np.arange(1.0, 31.0)
    st = discount_factors(paths_2019, mats, level=0.999)
    analytic = zcb_price(m, m.x.z0, m.y.z0, mats)
    err = np.abs(st.estimate.mean - analytic)
    inside = st.estimate.contains(analytic)[np.isin(mats, [1, 2, 5, 10])]
    short = float(np.max(err[mats <= 5]))
    long_ = float(np.max(err))
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(inside)) and short <= 0.005 and long_ <= 0.05
    report(acceptance_line, 5, ok,
           f"99.9% CI covers P(0,T) at 1,2,5,10y: {bool(np.all(inside))}; max |err| T<=5 {short:.4f} (<=0.005), "
           f"T<=30 {long_:.4f} (<=0.05)")
    assert ok and elapsed < 120


def test_criterion_06_moments(acceptance_line, model_2019):
    m = model_2019
    t0 = time.perf_counter()
    cfg = SimConfig(horizon=30.0, paths=100_000, seed=0, record_every=30 * 256)
    x, y = simulate(m, cfg).state(30.0)
    r = x - y
    n = r.size
    mean, var = float(r.mean()), float(r.var(ddof=1))
    c = r - mean
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt((np.mean(c**4) - var**2) / n)
    mu, v = cond_mean(m, m.x.z0, m.y.z0, 30.0), cond_var(m, m.x.z0, m.y.z0, 30.0)
    zm, zv = abs(mean - mu) / se_mean, abs(var - v) / se_var
    elapsed = time.perf_counter() - t0
    ok = zm < 3 and zv < 3 and elapsed < 180
    report(acceptance_line, 6, ok,
           f"r(30) at M=10^5: mean off by {zm:.2f} SE, variance off by {zv:.2f} SE (<3), {elapsed:.1f}s")
    assert ok


def test_criterion_07_calibration(acceptance_line, model_2019):
    t0 = time.perf_counter()
    synth = synthetic_curve(model_2019, PILLARS)
    rng = np.random.default_rng(7)
    pi0 = model_2019.to_pi()
    res = calibrate(synth, guess=pi0 * (1 + rng.uniform(-0.1, 0.1, 8)))
    elapsed = time.perf_counter() - t0
    ok = res.objective < 1e-10 and res.mre < 1e-4 and elapsed < 30
    text = f"synthetic: f {res.objective:.1e} (<1e-10), MRE {res.mre:.1e} (<1e-4), {elapsed:.1f}s"
    targets = {"2019-12-30": 0.144e-2, "2020-11-30": 0.138e-2}
    for date, target in targets.items():
        curve = market_curve(date)
        if curve is None:
            text += f"; {date} curve not supplied (conditional part skipped)"
            continue
        t1 = time.perf_counter()
        r = calibrate(curve)
        dt = time.perf_counter() - t1
        f_ref = TABLE[date]["objective"]
        good = r.mre <= target + 0.02e-2 and f_ref / 2 <= r.objective <= 2 * f_ref and dt < 30
        ok &= good
        text += f"; {date}: MRE {100 * r.mre:.3f}%, f {r.objective:.3e}, {dt:.1f}s"
    report(acceptance_line, 7, ok, text)
    assert ok


def test_criterion_08_forward_zcb(acceptance_line, model_2019, paths_2019):
    m = model_2019
    mats = np.array([1, 2, 5, 10, 20, 30.0])
    fz = model_forward_zcb(m, paths_2019, 0.0, mats)
    err0 = float(np.max(np.abs(fz.estimate.mean / zcb_price(m, m.x.z0, m.y.z0, mats) - 1)))
    ok = err0 <= 1e-14
    text = f"t=0 forward ZC vs closed form rel {err0:.1e} (<=1e-14)"
    curve = market_curve("2019-12-30")
    if curve is None:
        text += "; 2019-12-30 curve not supplied (conditional part skipped)"
    else:
        cal = calibrate(curve).model
        p = simulate(cal, SimConfig(horizon=30.0, paths=10_000, seed=0, record_every=256))
        for t, bound in ((1.0, 0.02), (5.0, 0.05)):
            later = np.arange(t + 1, min(t + 25, curve.last) + 1e-9)
            res = model_forward_zcb(cal, p, t, later, curve=curve)
            e = float(np.mean(np.abs(res.estimate.mean - res.market)))
            ok &= e <= bound
            text += f"; t={t:g} mean |err| {e:.4f} (<={bound})"
    report(acceptance_line, 8, ok, text)
    assert ok


def test_criterion_09_bachelier(acceptance_line):
    F, A, vol, T = 0.0123, 4.37, 0.0061, 3.0
    atm = bachelier_price(SwaptionSpec(T, 5, F), F, A, vol)
    closed = A * vol * math.sqrt(T / (2 * math.pi))
    e_atm = abs(atm / closed - 1)
    parity = 0.0
    for K in (-0.01, 0.0, 0.005, 0.0123, 0.02, 0.05):
        pay = bachelier_price(SwaptionSpec(T, 5, K, True), F, A, vol)
        rec = bachelier_price(SwaptionSpec(T, 5, K, False), F, A, vol)
        parity = max(parity, abs(pay - rec - A * (F - K)))
    lim_ok = all(
        bachelier_price(SwaptionSpec(T, 5, K, payer), F, A, 0.0) == A * max((1 if payer else -1) * (F - K), 0.0)
        for K in (0.0, 0.0123, 0.03) for payer in (True, False))
    ok = e_atm <= 1e-12 and parity <= 1e-15 and lim_ok
    report(acceptance_line, 9, ok, f"ATM rel err {e_atm:.1e} (<=1e-12), parity {parity:.1e}, sigma=0 intrinsic: {lim_ok}")
    assert ok


def test_criterion_10_swaption_grid(acceptance_line, model_2019, paths_2019):
    t0 = time.perf_counter()
    grid = load_swaption_market(DEMO / "swaptions.csv")
    shifts = np.array([-0.01, -0.005, 0.0, 0.005, 0.01])
    finite, monotone, n = True, True, 0
    for row in grid.cells:
        for cell in row:
            prices = [model_swaption_price(model_2019, paths_2019, SwaptionSpec(cell.maturity, cell.tenor, cell.strike + s))
                      for s in shifts]
            mu = np.array([p.mean for p in prices])
            se = np.array([p.std_err for p in prices])
            finite &= bool(np.all(np.isfinite(mu)) and np.all(np.isfinite(se)))
            monotone &= bool(np.all(np.diff(mu) <= 3 * np.maximum(se[1:], se[:-1])))
            n += 1
    elapsed = time.perf_counter() - t0
    ok = n == 35 and finite and monotone and elapsed < 300
    report(acceptance_line, 10, ok,
           f"{n} cells (7x5) x 5 strikes: finite {finite}, nonincreasing in strike within 3 SE {monotone}, {elapsed:.1f}s")
    assert ok


def test_criterion_11_determinism(acceptance_line, tmp_path):
    cfg = DEMO / "config.json"
    runs = {}
    for w in (1, 3, 1):
        out = tmp_path / f"run{len(runs)}_w{w}"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rc = main(["report", "--config", str(cfg), "--out", str(out), "--workers", str(w)])
        assert rc == EXIT_OK
        runs[out.name] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    names = list(runs)
    first = runs[names[0]]
    same = all(runs[k] == first for k in names[1:])
    manifest = json.loads(first["manifest.json"])
    ok = same and len(first) >= 8
    report(acceptance_line, 11, ok,
           f"3 report runs (workers 1, 3, 1): {len(first)} files byte-identical {same}; outputs {sorted(manifest['outputs'])[:3]}...")
    assert ok

