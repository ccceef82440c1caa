"""
Generate the synthetic inputs used by the other demos and by the CLI example
config: deposit and swap quotes priced off a known model, and a 7x5 swaption
market grid struck at the forward par rates.

    python3 demos/make_demo_data.py
"""

import csv
from pathlib import Path

import numpy as np

from cirdiff import CirParams, DiffModel, QuoteSet, zcb_price
from cirdiff.marketdata import ZeroCurve, bootstrap, write_quotes
from cirdiff.pricing import par_swap_rate_and_annuity

HERE = Path(__file__).resolve().parent / "data"

# parameters in the range produced by calibrating to end-2019 EUR curves
MODEL = DiffModel(
    CirParams(k=0.578626, sigma=0.291551, theta=0.118155, z0=0.268914),
    CirParams(k=0.59774, sigma=0.262334, theta=0.0864925, z0=0.280095),
)
DEPOSITS = (1 / 12, 0.25, 0.5)
SWAPS = tuple(range(1, 13)) + (15, 20, 25, 30)
SWPN_MATS = (1, 2, 5, 7, 10, 15, 20)
SWPN_TENORS = (1, 2, 5, 7, 10)


def model_quotes(model: DiffModel) -> QuoteSet:
    p = lambda t: zcb_price(model, model.x.z0, model.y.z0, t)
    deps = tuple((t, (1 / p(t) - 1) / t) for t in DEPOSITS)
    swaps = []
    for n in SWAPS:
        annuity = sum(p(i) for i in range(1, n + 1))
        swaps.append((float(n), (1 - p(n)) / annuity))
    return QuoteSet(deps, tuple(swaps))


def write_swaption_grid(curve: ZeroCurve, path: Path) -> None:
    # a smile-free surface: normal vol falls slowly with expiry and tenor
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["maturity_years", "tenor_years", "strike", "normal_vol"])
        for a in SWPN_MATS:
            for b in SWPN_TENORS:
                fwd, _ = par_swap_rate_and_annuity(curve, a, b)
                vol = 0.0060 - 0.00005 * a - 0.00003 * b
                w.writerow([a, b, repr(round(fwd, 6)), repr(round(vol, 6))])


def main():
    HERE.mkdir(parents=True, exist_ok=True)
    q = model_quotes(MODEL)
    write_quotes(q, HERE / "quotes.csv")
    curve = bootstrap(q)
    write_swaption_grid(curve, HERE / "swaptions.csv")
    print(f"wrote {HERE / 'quotes.csv'} ({len(q.deposits)} deposits, {len(q.swaps)} swaps)")
    print(f"wrote {HERE / 'swaptions.csv'} ({len(SWPN_MATS)}x{len(SWPN_TENORS)} grid)")
    err = np.max(np.abs(curve.discounts - zcb_price(MODEL, MODEL.x.z0, MODEL.y.z0, curve.maturities)))
    print(f"bootstrapped curve vs model discount factors: max abs diff {err:.2e}")


if __name__ == "__main__":
    main()
