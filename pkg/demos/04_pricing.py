"""
Pricing on simulated paths: forward zero-coupon bonds against the curve, and
the 7x5 swaption grid against Bachelier prices from the market normal vols.

A two-factor model with constant parameters cannot match a whole vol
surface; the last table shows by how much it misses.

    python3 demos/04_pricing.py
"""

from pathlib import Path

import numpy as np

from cirdiff import SimConfig, bootstrap, calibrate, load_quotes, simulate
from cirdiff.pricing import load_swaption_market, model_forward_zcb, swaption_grid_report

DATA = Path(__file__).resolve().parent / "data"

curve = bootstrap(load_quotes(DATA / "quotes.csv"))
m = calibrate(curve).model
market = load_swaption_market(DATA / "swaptions.csv")
paths = simulate(m, SimConfig(horizon=30.0, paths=10_000, seed=0, record_every=256))

for t in (1.0, 5.0):
    fz = model_forward_zcb(m, paths, t, np.arange(t + 1, 26.0), curve=curve)
    err = np.abs(fz.estimate.mean - fz.market)
    print(f"t={t:g}: mean |E[P(t,T)] - P(0,T)/P(0,t)| = {err.mean():.4f}, max {err.max():.4f}")

grid = swaption_grid_report(m, paths, curve, market)
print("\nmodel - market, basis points of notional (rows: expiry, columns: tenor)")
print("      " + "".join(f"{b:>8g}" for b in grid.tenors))
for a, row in zip(grid.maturities, grid.matrix("difference_bp")):
    print(f"{a:4g}y " + "".join(f"{v:8.1f}" for v in row))
