"""
Market quotes, curve bootstrapping and curve-implied forward quantities.

Conventions:

* year fractions are ACT/365F (``year_fraction``);
* deposits are simple-compounded, D(T) = 1 / (1 + r T);
* par swaps have an annual fixed leg (front stub if the maturity is not a
  whole number of years);
* the curve is a natural cubic spline on the continuously compounded zero
  rate R(0, T), knotted at the pillars, with D(T) = exp(-R(0, T) T).

Below the first pillar the zero rate is held flat at its first value;
beyond the last pillar nothing is extrapolated.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, root

log = logging.getLogger(__name__)

QUOTES_HEADER = ("type", "tenor_years", "rate")
CURVE_HEADER = ("maturity_years", "zero_rate", "discount")

# tolerance used to decide that a maturity sits on a pillar / inside the range
_T_TOL = 1e-12


class QuoteError(ValueError):
    """Malformed or inconsistent quote input."""


class BootstrapError(RuntimeError):
    pass


class ExtrapolationError(ValueError):
    pass


def year_fraction(start: date, end: date) -> float:
    """ACT/365 fixed."""
    return (end - start).days / 365.0


@dataclass(frozen=True)
class QuoteSet:
    deposits: tuple[tuple[float, float], ...] = ()
    swaps: tuple[tuple[float, float], ...] = ()
    valuation_date: date | None = None

    def __post_init__(self):
        for name in ("deposits", "swaps"):
            rows = tuple((float(t), float(r)) for t, r in getattr(self, name))
            object.__setattr__(self, name, rows)
            for i, (t, r) in enumerate(rows):
                if not (math.isfinite(t) and math.isfinite(r)):
                    raise QuoteError(f"{name}[{i}]: non-finite value ({t}, {r})")
                if t <= 0:
                    raise QuoteError(f"{name}[{i}]: tenor must be positive, got {t}")
                if i > 0 and t <= rows[i - 1][0]:
                    raise QuoteError(
                        f"{name}[{i}]: tenor {t} is not strictly greater than the previous tenor {rows[i - 1][0]}"
                    )
        if not self.deposits and not self.swaps:
            raise QuoteError("no instruments")
        tenors = [t for t, _ in self.deposits] + [t for t, _ in self.swaps]
        if len(set(tenors)) != len(tenors):
            raise QuoteError("duplicate maturity between deposits and swaps")


def load_quotes(path, valuation_date: date | None = None) -> QuoteSet:
    """
    Read a quotes CSV with header ``type,tenor_years,rate``.

    Rows are validated in file order, so an out-of-order tenor is reported
    against the line that introduced it.
    """
    path = Path(path)
    deposits: list[tuple[float, float]] = []
    swaps: list[tuple[float, float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise QuoteError(f"{path}: no instruments")
        if tuple(h.strip() for h in header) != QUOTES_HEADER:
            raise QuoteError(f"{path}: expected header {','.join(QUOTES_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise QuoteError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            kind = row[0].strip().upper()
            try:
                tenor, rate = float(row[1]), float(row[2])
            except ValueError as exc:
                raise QuoteError(f"{path}:{lineno}: {exc}") from None
            if kind == "DEPO":
                target = deposits
            elif kind == "SWAP":
                target = swaps
            else:
                raise QuoteError(f"{path}:{lineno}: unknown instrument type {row[0]!r}")
            if target and tenor <= target[-1][0]:
                raise QuoteError(
                    f"{path}:{lineno}: {kind} tenor {tenor} is not strictly increasing "
                    f"(previous {target[-1][0]})"
                )
            target.append((tenor, rate))
    if not deposits and not swaps:
        raise QuoteError(f"{path}: no instruments")
    return QuoteSet(tuple(deposits), tuple(swaps), valuation_date)


def write_quotes(q: QuoteSet, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUOTES_HEADER)
        for t, r in q.deposits:
            w.writerow(["DEPO", repr(t), repr(r)])
        for t, r in q.swaps:
            w.writerow(["SWAP", repr(t), repr(r)])


@dataclass(frozen=True)
class ZeroCurve:
    """Continuously compounded zero curve with natural cubic spline interpolation."""

    maturities: np.ndarray
    zero_rates: np.ndarray
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.array(self.maturities, dtype=float)
        z = np.array(self.zero_rates, dtype=float)
        if t.ndim != 1 or t.shape != z.shape or t.size == 0:
            raise ValueError("maturities and zero_rates must be equal-length, non-empty 1-d arrays")
        if np.any(t <= 0):
            raise ValueError("pillar maturities must be positive")
        if np.any(np.diff(t) <= 0):
            raise ValueError("pillar maturities must be strictly increasing")
        if not np.all(np.isfinite(z)):
            raise ValueError("zero rates must be finite")
        t.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "maturities", t)
        object.__setattr__(self, "zero_rates", z)
        spline = CubicSpline(t, z, bc_type="natural") if t.size >= 2 else None
        object.__setattr__(self, "_spline", spline)

    @classmethod
    def from_discounts(cls, maturities, discounts) -> "ZeroCurve":
        t = np.asarray(maturities, dtype=float)
        d = np.asarray(discounts, dtype=float)
        if np.any(d <= 0):
            raise ValueError("discount factors must be positive")
        return cls(t, -np.log(d) / t)

    @property
    def discounts(self) -> np.ndarray:
        return np.exp(-self.zero_rates * self.maturities)

    @property
    def last(self) -> float:
        return float(self.maturities[-1])

    def pillars(self) -> list[tuple[float, float, float]]:
        return list(zip(self.maturities.tolist(), self.zero_rates.tolist(), self.discounts.tolist()))

    def zero_rate(self, T):
        T_arr = np.asarray(T, dtype=float)
        if np.any(T_arr < 0):
            raise ValueError("maturity must be non-negative")
        if np.any(T_arr > self.last + _T_TOL):
            raise ExtrapolationError(f"maturity {np.max(T_arr)} beyond the last pillar {self.last}")
        T_c = np.clip(T_arr, self.maturities[0], self.last)
        out = self._spline(T_c) if self._spline is not None else np.full_like(T_c, self.zero_rates[0])
        # reproduce the knot values exactly
        idx = np.searchsorted(self.maturities, T_c)
        idx = np.clip(idx, 0, self.maturities.size - 1)
        on_pillar = np.abs(self.maturities[idx] - T_c) <= _T_TOL
        out = np.where(on_pillar, self.zero_rates[idx], out)
        return float(out) if out.ndim == 0 else out

    def discount(self, T):
        T_arr = np.asarray(T, dtype=float)
        out = np.exp(-np.asarray(self.zero_rate(T_arr)) * T_arr)
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_HEADER)
            for t, z, d in self.pillars():
                w.writerow([repr(t), repr(z), repr(d)])

    @classmethod
    def read_csv(cls, path, *, check_tol: float = 1e-8) -> "ZeroCurve":
        """Load a curve CSV; the discount column is cross-checked against the zero rates."""
        path = Path(path)
        mats, zeros, discs = [], [], []
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CURVE_HEADER:
                raise QuoteError(f"{path}: expected header {','.join(CURVE_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    t, z, d = (float(c) for c in row)
                except ValueError as exc:
                    raise QuoteError(f"{path}:{lineno}: {exc}") from None
                mats.append(t)
                zeros.append(z)
                discs.append(d)
        if not mats:
            raise QuoteError(f"{path}: no pillars")
        try:
            curve = cls(mats, zeros)
        except ValueError as exc:
            raise QuoteError(f"{path}: {exc}") from None
        mismatch = np.max(np.abs(curve.discounts - np.asarray(discs)))
        if mismatch > check_tol:
            log.warning("%s: discount column differs from exp(-R T) by up to %.3g", path, mismatch)
        return curve


# ---------------------------------------------------------------------------
# bootstrapping

def fixed_leg_schedule(start: float, tenor: float, frequency: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Payment times and accrual fractions; any stub period sits at the front."""
    if tenor <= 0 or frequency < 1:
        raise ValueError("tenor must be positive and frequency >= 1")
    n = tenor * frequency
    n_full = int(math.floor(n + 1e-9))
    end = start + tenor
    pays = end - np.arange(n_full)[::-1] / frequency
    if n - n_full > 1e-9:
        pays = np.concatenate([[end - n_full / frequency], pays]) if n_full else np.array([end])
    pays = pays[pays > start + 1e-12]
    accr = np.diff(np.concatenate([[start], pays]))
    return pays, accr


def swap_par_rate(curve: ZeroCurve, maturity: float, frequency: int = 1) -> float:
    pays, accr = fixed_leg_schedule(0.0, maturity, frequency)
    annuity = float(np.dot(accr, curve.discount(pays)))
    return (1.0 - curve.discount(maturity)) / annuity


def bootstrap(q: QuoteSet, *, tol: float = 1e-13, max_rounds: int = 50) -> ZeroCurve:
    """
    Build a zero curve that reprices every deposit and par swap.

    Deposits pin their pillars directly. Swap pillars are first solved one at
    a time (each with the pillars known so far), then refined jointly because
    the spline is global: adding a later pillar moves the interpolated
    discount factors used by earlier swaps.
    """
    dep_t, dep_z = [], []
    for t, r in q.deposits:
        growth = 1.0 + r * t
        if growth <= 0:
            raise BootstrapError(f"deposit {t}y at {r} implies a non-positive discount factor")
        dep_t.append(t)
        dep_z.append(math.log(growth) / t)
    if not q.swaps:
        return ZeroCurve(dep_t, dep_z)

    swap_t = [t for t, _ in q.swaps]
    swap_r = np.array([r for _, r in q.swaps])
    order_t = np.array(dep_t + swap_t)
    perm = np.argsort(order_t, kind="stable")

    def curve_for(swap_z) -> ZeroCurve:
        z = np.concatenate([dep_z, swap_z])
        return ZeroCurve(order_t[perm], z[perm])

    def par_errors(swap_z):
        c = curve_for(swap_z)
        return np.array([swap_par_rate(c, t) for t in swap_t]) - swap_r

    # sequential pass
    swap_z = np.empty(len(swap_t))
    for j, (t, r) in enumerate(q.swaps):
        known_t = dep_t + swap_t[:j] + [t]
        known_z = list(dep_z) + list(swap_z[:j])
        p = np.argsort(known_t, kind="stable")

        def err(z, known_z=known_z, known_t=known_t, p=p, t=t, r=r):
            zz = np.array(known_z + [z])[p]
            return swap_par_rate(ZeroCurve(np.array(known_t)[p], zz), t) - r

        guess = r if math.isfinite(r) else 0.0
        lo, hi = guess - 0.05, guess + 0.05
        while err(lo) * err(hi) > 0:
            lo, hi = lo - 0.25, hi + 0.25
            if hi - lo > 10:
                raise BootstrapError(f"cannot bracket the zero rate for the {t}y swap")
        swap_z[j] = brentq(err, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    # joint refinement
    for _ in range(max_rounds):
        e = par_errors(swap_z)
        if np.max(np.abs(e)) <= tol:
            break
        sol = root(par_errors, swap_z, method="hybr", options={"xtol": 1e-15})
        swap_z = sol.x
    e = par_errors(swap_z)
    if not np.all(np.isfinite(e)) or np.max(np.abs(e)) > 1e-10:
        raise BootstrapError(f"bootstrap did not reprice the swaps (max error {np.max(np.abs(e)):.3g})")
    return curve_for(swap_z)


# ---------------------------------------------------------------------------
# forward quantities

def _check_forward_args(t, T):
    t = np.asarray(t, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(t < 0) or np.any(t >= T):
        raise ValueError("forward quantities need 0 <= t < T")
    return t, T


def market_forward_rate(c: ZeroCurve, t, T):
    """R^M(t, T) = (T R(0, T) - t R(0, t)) / (T - t)."""
    t, T = _check_forward_args(t, T)
    rt = np.where(t > 0, np.asarray(c.zero_rate(np.maximum(t, 0.0))), 0.0)
    out = (T * np.asarray(c.zero_rate(T)) - t * rt) / (T - t)
    return float(out) if out.ndim == 0 else out


def market_forward_zcb(c: ZeroCurve, t, T):
    """exp(-R^M(t, T) (T - t)), the curve-implied price at t of a bond paying at T."""
    t, T = _check_forward_args(t, T)
    out = np.exp(-np.asarray(market_forward_rate(c, t, T)) * (T - t))
    return float(out) if out.ndim == 0 else out
