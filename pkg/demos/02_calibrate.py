"""
Bootstrap a zero curve from deposit and swap quotes, then fit the eight
model parameters to its discount factors.

The demo quotes are priced off a known model (see make_demo_data.py), so the
fit should be essentially exact; the spline between pillars accounts for the
rest.

    python3 demos/02_calibrate.py
"""

from pathlib import Path

import numpy as np

from cirdiff import bootstrap, calibrate, load_quotes, zcb_price
from cirdiff.calibration import CalibrationOptions, DEFAULT_GUESS, is_admissible

DATA = Path(__file__).resolve().parent / "data"

quotes = load_quotes(DATA / "quotes.csv")
curve = bootstrap(quotes)
print(f"{curve.maturities.size} pillars out to {curve.last:g}y")
print("zero rates:", " ".join(f"{z:+.4%}" for z in curve.zero_rates[:6]), "...")

print("\ndefault guess admissible:", is_admissible(DEFAULT_GUESS)[0])
res = calibrate(curve)
print(f"objective {res.objective:.3e}  MRE {res.mre:.3e}  iterations {res.iterations}  converged {res.converged}")
m = res.model
for leg, p in (("x", m.x), ("y", m.y)):
    print(f"  {leg}: k {p.k:.5f}  sigma {p.sigma:.5f}  theta {p.theta:.6f}  z0 {p.z0:.6f}")

T = curve.maturities
model = zcb_price(m, m.x.z0, m.y.z0, T)
err = np.abs(model - curve.discount(T))
print(f"\nmax |P_model - P_market| over pillars: {err.max():.2e} at {T[err.argmax()]:g}y")

# a few random admissible starts; same seed, same answer
multi = calibrate(curve, options=CalibrationOptions(multistart=4, seed=1))
print(f"multistart (4): objective {multi.objective:.3e}  MRE {multi.mre:.3e}")
