"""
Pricing on simulated paths: t-forward zero-coupon bonds and European
swaptions, plus the Bachelier formula used to turn market normal vols into
prices.

Conventions: unit notional, fixed leg with ``frequency`` payments per year,
payoffs discounted path-wise with exp(-int_0^t r ds).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .marketdata import ZeroCurve, fixed_leg_schedule, market_forward_zcb
from .model import DiffModel, log_zcb_price
from .simulation import GridError, McEstimate, PathSet

MARKET_HEADER = ("maturity_years", "tenor_years", "strike", "normal_vol")
REPORT_HEADER = MARKET_HEADER + ("model_price", "market_price", "difference_bp", "ci_low", "ci_high")


class MissingCellWarning(UserWarning):
    pass


def _model_zcb(m: DiffModel, x, y, tau):
    # simulated states may sit slightly below zero; the closed form is still
    # well defined there, so skip the non-negativity check in zcb_price
    return np.exp(log_zcb_price(m, x, y, tau))


# ---------------------------------------------------------------------------
# forward zero-coupon bonds

@dataclass(frozen=True)
class ForwardZcb:
    t: float
    maturities: np.ndarray
    estimate: McEstimate
    market: np.ndarray | None = None

    def to_csv(self, path) -> None:
        e = self.estimate
        market = np.full(self.maturities.shape, np.nan) if self.market is None else self.market
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "maturity", "model_mean", "std_err", "ci_low", "ci_high", "market", "abs_error"])
            for T, mu, se, lo, hi, mk in zip(self.maturities, e.mean, e.std_err, e.ci_low, e.ci_high, market):
                w.writerow([repr(float(v)) for v in (self.t, T, mu, se, lo, hi, mk, abs(mu - mk))])


def model_forward_zcb(m: DiffModel, p: PathSet, t: float, maturities, level: float = 0.99,
                      curve: ZeroCurve | None = None) -> ForwardZcb:
    """
    Mean over paths of P(t, T) evaluated at the simulated state (x(t), y(t)).

    If ``curve`` is given the curve-implied forward price is attached for
    comparison.
    """
    mats = np.atleast_1d(np.asarray(maturities, dtype=float))
    if np.any(mats <= t):
        raise ValueError("maturities must exceed t")
    x, y = p.state(t)
    samples = _model_zcb(m, x[:, None], y[:, None], (mats - t)[None, :])
    if t == 0.0:
        # the state is deterministic; reduce exactly rather than through sums
        mean = samples[0]
        zero = np.zeros_like(mean)
        est = McEstimate(mean, zero, mean.copy(), mean.copy(), level)
    else:
        est = McEstimate.from_samples(samples, level)
    market = None
    if curve is not None:
        market = np.asarray(market_forward_zcb(curve, np.full(mats.shape, t), mats), dtype=float)
    return ForwardZcb(float(t), mats, est, market)


# ---------------------------------------------------------------------------
# swaptions

@dataclass(frozen=True)
class SwaptionSpec:
    maturity: float
    tenor: float
    strike: float
    payer: bool = True
    frequency: int = 1

    def __post_init__(self):
        object.__setattr__(self, "maturity", float(self.maturity))
        object.__setattr__(self, "tenor", float(self.tenor))
        object.__setattr__(self, "strike", float(self.strike))
        if not self.maturity > 0 or not self.tenor > 0:
            raise ValueError("maturity and tenor must be positive")
        if int(self.frequency) != self.frequency or self.frequency < 1:
            raise ValueError("frequency must be an integer >= 1")
        if not math.isfinite(self.strike):
            raise ValueError("strike must be finite")

    @property
    def sign(self) -> float:
        return 1.0 if self.payer else -1.0

    def schedule(self):
        pays, accr = fixed_leg_schedule(self.maturity, self.tenor, self.frequency)
        return pays, accr


def par_swap_rate_and_annuity(c: ZeroCurve, start: float, tenor: float, freq: int = 1) -> tuple[float, float]:
    """Forward par rate and annuity of a swap starting at ``start`` on curve c."""
    pays, accr = fixed_leg_schedule(start, tenor, freq)
    annuity = float(np.dot(accr, c.discount(pays)))
    d_start = 1.0 if start == 0 else float(c.discount(start))
    rate = (d_start - float(c.discount(start + tenor))) / annuity
    return rate, annuity


def bachelier_price(spec: SwaptionSpec, forward: float, annuity: float, normal_vol: float) -> float:
    """Normal-model swaption price per unit notional."""
    if normal_vol < 0 or not math.isfinite(normal_vol):
        raise ValueError("normal_vol must be finite and non-negative")
    diff = spec.sign * (forward - spec.strike)
    sd = normal_vol * math.sqrt(spec.maturity)
    if sd == 0.0:
        return annuity * max(diff, 0.0)
    if spec.payer:
        # beyond |d| = 40 both cdf and pdf are already 0 / 1 in double precision
        d = min(max((forward - spec.strike) / sd, -40.0), 40.0)
        return annuity * ((forward - spec.strike) * stats.norm.cdf(d) + sd * stats.norm.pdf(d))
    payer = bachelier_price(SwaptionSpec(spec.maturity, spec.tenor, spec.strike, True, spec.frequency),
                            forward, annuity, normal_vol)
    return payer - annuity * (forward - spec.strike)


def swap_rate_paths(m: DiffModel, p: PathSet, spec: SwaptionSpec):
    """Per-path swap rate S and annuity A at expiry from the simulated state."""
    x, y = p.state(spec.maturity)
    pays, accr = spec.schedule()
    zcb = _model_zcb(m, x[:, None], y[:, None], (pays - spec.maturity)[None, :])
    annuity = zcb @ accr
    rate = (1.0 - zcb[:, -1]) / annuity
    return rate, annuity


@dataclass(frozen=True)
class SwaptionPrice:
    spec: SwaptionSpec
    estimate: McEstimate

    @property
    def mean(self) -> float:
        return float(self.estimate.mean)

    @property
    def std_err(self) -> float:
        return float(self.estimate.std_err)


def model_swaption_price(m: DiffModel, p: PathSet, spec: SwaptionSpec, level: float = 0.99) -> SwaptionPrice:
    """Path-wise discounted A * max(+-(S - K), 0) averaged over paths."""
    if spec.maturity > p.config.horizon + 1e-9:
        raise GridError(f"swaption expiry {spec.maturity} beyond the simulated horizon")
    rate, annuity = swap_rate_paths(m, p, spec)
    payoff = annuity * np.maximum(spec.sign * (rate - spec.strike), 0.0)
    samples = p.pathwise_discount(spec.maturity) * payoff
    return SwaptionPrice(spec, McEstimate.from_samples(samples, level))


# ---------------------------------------------------------------------------
# grid report

@dataclass(frozen=True)
class SwaptionCell:
    maturity: float
    tenor: float
    strike: float = math.nan
    normal_vol: float = math.nan
    model_price: float = math.nan
    market_price: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan

    @property
    def difference(self) -> float:
        return self.model_price - self.market_price

    @property
    def difference_bp(self) -> float:
        return 1e4 * self.difference


@dataclass(frozen=True)
class SwaptionGrid:
    maturities: tuple[float, ...]
    tenors: tuple[float, ...]
    cells: tuple[tuple[SwaptionCell, ...], ...]

    def __post_init__(self):
        if len(self.cells) != len(self.maturities) or any(len(r) != len(self.tenors) for r in self.cells):
            raise ValueError("swaption grid must be rectangular")

    def matrix(self, attr: str) -> np.ndarray:
        return np.array([[getattr(c, attr) for c in row] for row in self.cells], dtype=float)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for row in self.cells:
                for c in row:
                    w.writerow([repr(float(v)) for v in (
                        c.maturity, c.tenor, c.strike, c.normal_vol, c.model_price,
                        c.market_price, c.difference_bp, c.ci_low, c.ci_high)])


def load_swaption_market(path) -> SwaptionGrid:
    """
    Read a market grid CSV. Cells with an empty strike or vol are kept as
    missing (NaN) and reported with a warning.
    """
    path = Path(path)
    entries = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != MARKET_HEADER:
            raise ValueError(f"{path}: expected header {','.join(MARKET_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields")
            try:
                mat, ten = float(row[0]), float(row[1])
                strike = float(row[2]) if row[2].strip() else math.nan
                vol = float(row[3]) if row[3].strip() else math.nan
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if (mat, ten) in entries:
                raise ValueError(f"{path}:{lineno}: duplicate cell {mat}x{ten}")
            entries[mat, ten] = (strike, vol)
    mats = tuple(sorted({k[0] for k in entries}))
    tens = tuple(sorted({k[1] for k in entries}))
    cells = []
    for a in mats:
        row = []
        for b in tens:
            strike, vol = entries.get((a, b), (math.nan, math.nan))
            row.append(SwaptionCell(a, b, strike, vol))
        cells.append(tuple(row))
    return SwaptionGrid(mats, tens, tuple(cells))


def swaption_grid_report(m: DiffModel, p: PathSet, c: ZeroCurve, market: SwaptionGrid,
                         level: float = 0.99, frequency: int = 1) -> SwaptionGrid:
    """Model prices on the paths, Bachelier market prices off the curve, per cell."""
    rows = []
    for row in market.cells:
        out = []
        for cell in row:
            if math.isnan(cell.strike):
                warnings.warn(f"swaption cell {cell.maturity}x{cell.tenor}: no strike, skipped",
                              MissingCellWarning, stacklevel=2)
                out.append(cell)
                continue
            spec = SwaptionSpec(cell.maturity, cell.tenor, cell.strike, True, frequency)
            try:
                mp = model_swaption_price(m, p, spec, level)
            except (GridError, ValueError) as exc:
                warnings.warn(f"swaption cell {cell.maturity}x{cell.tenor}: {exc}", MissingCellWarning, stacklevel=2)
                out.append(cell)
                continue
            market_price = math.nan
            if math.isnan(cell.normal_vol):
                warnings.warn(f"swaption cell {cell.maturity}x{cell.tenor}: no normal vol",
                              MissingCellWarning, stacklevel=2)
            else:
                try:
                    fwd, ann = par_swap_rate_and_annuity(c, cell.maturity, cell.tenor, frequency)
                    market_price = bachelier_price(spec, fwd, ann, cell.normal_vol)
                except ValueError as exc:
                    warnings.warn(f"swaption cell {cell.maturity}x{cell.tenor}: {exc}",
                                  MissingCellWarning, stacklevel=2)
            e = mp.estimate
            out.append(SwaptionCell(cell.maturity, cell.tenor, cell.strike, cell.normal_vol,
                                    float(e.mean), market_price, float(e.ci_low), float(e.ci_high)))
        rows.append(tuple(out))
    return SwaptionGrid(market.maturities, market.tenors, tuple(rows))
