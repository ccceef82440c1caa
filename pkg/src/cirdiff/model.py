"""
Closed-form quantities for the CIR-difference short-rate model.

The short rate is r(t) = x(t) - y(t) where x and y are independent CIR
processes

    dz = k_z (theta_z - z) dt + sigma_z sqrt(z) dW_z,   z in {x, y}.

Zero-coupon bonds are exponential-affine in both legs,

    P(t, T) = A_x(tau) exp(-B_x(tau) x(t)) * A_y(tau) exp(+B_y(tau) y(t)),

with A_z, B_z written in terms of three reparametrised constants
(phi1, phi2, phi3) per leg:

    x leg:  phi1 = sqrt(k^2 + 2 sigma^2)
    y leg:  phi1 = sqrt(k^2 - 2 sigma^2)
    both:   phi2 = (k + phi1) / 2,  phi3 = 2 k theta / sigma^2

The factors are evaluated through G = phi2 + (phi1 - phi2) exp(-phi1 tau),
which is algebraically identical to the usual (phi1 + phi2 (e^{phi1 tau} - 1))
denominator divided by e^{phi1 tau}, but does not overflow for long maturities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

#: Smallest admissible volatility / phi value; below this the phi map is singular.
EPS = 1e-8

# relative slack used when checking Feller / discriminant on round-tripped values
_REL_TOL = 1e-12


class InvalidPhiError(ValueError):
    """A phi triple outside the admissible set."""


class DiscriminantError(ValueError):
    """The y-leg requires k^2 >= 2 sigma^2 so that phi1 is real."""


class Leg(str, Enum):
    X = "x"
    Y = "y"


@dataclass(frozen=True)
class CirParams:
    """One CIR leg: mean-reversion speed, volatility, long-run mean, start value."""

    k: float
    sigma: float
    theta: float
    z0: float = 0.0

    def __post_init__(self):
        for name in ("k", "sigma", "theta", "z0"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    @property
    def feller_margin(self) -> float:
        return 2.0 * self.k * self.theta - self.sigma**2


@dataclass(frozen=True)
class PhiTriple:
    phi1: float
    phi2: float
    phi3: float
    leg: Leg

    def __post_init__(self):
        object.__setattr__(self, "leg", Leg(self.leg))
        for name in ("phi1", "phi2", "phi3"):
            object.__setattr__(self, name, float(getattr(self, name)))
        p1, p2, p3 = self.phi1, self.phi2, self.phi3
        if not all(math.isfinite(v) for v in (p1, p2, p3)):
            raise InvalidPhiError(f"non-finite phi triple {self}")
        if p1 < EPS or p2 < EPS:
            raise InvalidPhiError(f"phi1, phi2 must be >= {EPS}, got {p1}, {p2}")
        if p3 < 1.0 - _REL_TOL:
            raise InvalidPhiError(f"Feller condition requires phi3 >= 1, got {p3}")
        if 2.0 * p2 - p1 <= 0.0:
            raise InvalidPhiError("mean reversion requires 2*phi2 > phi1")
        if self.leg is Leg.X and not p1 > p2:
            raise InvalidPhiError("x leg requires phi1 > phi2 (sigma_x > 0)")
        if self.leg is Leg.Y and not p2 > p1:
            raise InvalidPhiError("y leg requires phi2 > phi1 (sigma_y > 0)")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.phi1, self.phi2, self.phi3)


@dataclass(frozen=True)
class BondFactors:
    """A_z(t, T) and B_z(t, T); scalars or arrays matching the tau input."""

    a: float | np.ndarray
    b: float | np.ndarray


@dataclass(frozen=True)
class DiffModel:
    """r = x - y with independent CIR legs x (positive) and y (negative)."""

    x: CirParams
    y: CirParams

    def __post_init__(self):
        for name, p in (("x", self.x), ("y", self.y)):
            if p.feller_margin < -_REL_TOL * max(1.0, 2 * p.k * p.theta):
                raise ValueError(f"{name} leg violates the Feller condition 2*k*theta >= sigma^2")
        if self.y.k**2 - 2.0 * self.y.sigma**2 < -_REL_TOL * max(1.0, self.y.k**2):
            raise DiscriminantError("y leg requires k^2 >= 2*sigma^2")

    @property
    def r0(self) -> float:
        return self.x.z0 - self.y.z0

    def to_pi(self) -> np.ndarray:
        """Return the 8-vector [phi1_x, phi2_x, phi3_x, phi1_y, phi2_y, phi3_y, x0, y0]."""
        tx = phi_from_model(self.x, Leg.X)
        ty = phi_from_model(self.y, Leg.Y)
        return np.array([*tx.as_tuple(), *ty.as_tuple(), self.x.z0, self.y.z0])

    @classmethod
    def from_pi(cls, pi) -> "DiffModel":
        pi = np.asarray(pi, dtype=float)
        if pi.shape != (8,):
            raise ValueError(f"expected an 8-vector, got shape {pi.shape}")
        x = model_from_phi(PhiTriple(*pi[0:3], Leg.X), z0=float(pi[6]))
        y = model_from_phi(PhiTriple(*pi[3:6], Leg.Y), z0=float(pi[7]))
        return cls(x, y)

    def to_dict(self) -> dict:
        return {
            "x": {"k": self.x.k, "sigma": self.x.sigma, "theta": self.x.theta, "x0": self.x.z0},
            "y": {"k": self.y.k, "sigma": self.y.sigma, "theta": self.y.theta, "y0": self.y.z0},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiffModel":
        dx, dy = d["x"], d["y"]
        return cls(
            CirParams(dx["k"], dx["sigma"], dx["theta"], dx.get("x0", dx.get("z0", 0.0))),
            CirParams(dy["k"], dy["sigma"], dy["theta"], dy.get("y0", dy.get("z0", 0.0))),
        )


# ---------------------------------------------------------------------------
# parameter maps

def phi_from_model(p: CirParams, leg: Leg | str) -> PhiTriple:
    leg = Leg(leg)
    if p.sigma < EPS:
        raise ValueError(f"sigma = {p.sigma} is below {EPS}; phi3 = 2*k*theta/sigma^2 is undefined")
    if leg is Leg.X:
        phi1 = math.sqrt(p.k**2 + 2.0 * p.sigma**2)
    else:
        disc = p.k**2 - 2.0 * p.sigma**2
        if disc < 0:
            raise DiscriminantError(f"y leg needs k^2 - 2 sigma^2 >= 0, got {disc}")
        phi1 = math.sqrt(disc)
    phi2 = 0.5 * (p.k + phi1)
    phi3 = 2.0 * p.k * p.theta / p.sigma**2
    return PhiTriple(phi1, phi2, phi3, leg)


def model_from_phi(t: PhiTriple, z0: float = 0.0) -> CirParams:
    """Invert the phi map; the triple's own validation guarantees real, positive output."""
    p1, p2, p3 = t.as_tuple()
    k = 2.0 * p2 - p1
    # factored forms of 2 (phi2 phi1 - phi2^2): no cancellation as phi1 -> phi2
    if t.leg is Leg.X:
        sigma2 = 2.0 * p2 * (p1 - p2)
        theta = -p2 * p3 * (p1 - p2) / (p1 - 2.0 * p2)
    else:
        sigma2 = 2.0 * p2 * (p2 - p1)
        theta = p2 * p3 * (p1 - p2) / (p1 - 2.0 * p2)
    sigma = math.sqrt(sigma2)
    if sigma < EPS:
        raise InvalidPhiError(f"phi triple {t} maps to sigma = {sigma} < {EPS}")
    return CirParams(float(k), float(sigma), float(theta), float(z0))


def feller_check(p: CirParams) -> tuple[bool, float]:
    """Return (passes, 2*k*theta - sigma^2)."""
    margin = p.feller_margin
    return margin >= 0.0, margin


# ---------------------------------------------------------------------------
# bond factors

def _phi_log_factors(phi1, phi2, phi3, tau):
    """log A, B, d(log A)/dtau, dB/dtau for raw (unvalidated) phi values; broadcasts."""
    tau = np.asarray(tau, dtype=float)
    u = np.exp(-phi1 * tau)
    g = phi2 + (phi1 - phi2) * u
    b = -np.expm1(-phi1 * tau) / g
    log_a = phi3 * (np.log(phi1) + (phi2 - phi1) * tau - np.log(g))
    log_a = np.where(tau == 0.0, 0.0, log_a)
    dlog_a = -phi3 * phi2 * (phi1 - phi2) * b
    db = phi1**2 * u / g**2
    return log_a, b, dlog_a, db


def _deterministic_log_factors(p: CirParams, leg: Leg, tau):
    # sigma -> 0 limit: P_z = exp(-/+ int z ds) along the ODE path
    tau = np.asarray(tau, dtype=float)
    if p.k > 0:
        b = -np.expm1(-p.k * tau) / p.k
        db = np.exp(-p.k * tau)
    else:
        b = tau.copy()
        db = np.ones_like(tau)
    sign = -1.0 if leg is Leg.X else 1.0
    log_a = sign * p.theta * (tau - b)
    dlog_a = sign * p.theta * (1.0 - db)
    return log_a, b, dlog_a, db


def _leg_log_factors(p: CirParams, leg: Leg, tau):
    if p.sigma < EPS:
        return _deterministic_log_factors(p, leg, tau)
    t = phi_from_model(p, leg)
    return _phi_log_factors(t.phi1, t.phi2, t.phi3, tau)


def _scalarize(v, like):
    return float(v) if np.ndim(like) == 0 else v


def bond_factors(t: PhiTriple, tau) -> BondFactors:
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise ValueError("tau must be non-negative")
    log_a, b, _, _ = _phi_log_factors(t.phi1, t.phi2, t.phi3, tau_arr)
    with np.errstate(over="ignore", under="ignore"):
        # a y-leg A grows without bound in tau; inf is the honest float answer
        a = np.exp(log_a)
    return BondFactors(a=_scalarize(a, tau), b=_scalarize(b, tau))


def bond_factor_derivatives(t: PhiTriple, tau) -> tuple:
    """Analytic (d log A / dtau, dB / dtau); dtau = dT for fixed t."""
    _, _, dlog_a, db = _phi_log_factors(t.phi1, t.phi2, t.phi3, np.asarray(tau, dtype=float))
    return _scalarize(dlog_a, tau), _scalarize(db, tau)


def log_zcb_price(m: DiffModel, x_t, y_t, tau):
    lax, bx, _, _ = _leg_log_factors(m.x, Leg.X, tau)
    lay, by, _, _ = _leg_log_factors(m.y, Leg.Y, tau)
    return lax - bx * np.asarray(x_t, dtype=float) + lay + by * np.asarray(y_t, dtype=float)


def zcb_price(m: DiffModel, x_t, y_t, tau):
    """P(t, t + tau) given the leg states; broadcasts over x_t, y_t and tau."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise ValueError("tau must be non-negative")
    if np.any(np.asarray(x_t) < 0) or np.any(np.asarray(y_t) < 0):
        raise ValueError("leg states must be non-negative")
    out = np.exp(log_zcb_price(m, x_t, y_t, tau_arr))
    out = np.where(tau_arr == 0.0, 1.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def spot_rate(price, tau):
    """Continuously compounded rate -log(P)/tau."""
    price = np.asarray(price, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be > 0")
    if np.any(price <= 0):
        raise ValueError("price must be > 0")
    out = -np.log(price) / tau
    return float(out) if out.ndim == 0 else out


def inst_forward_rate(m: DiffModel, x_t, y_t, tau):
    """f(t, t + tau) = -d/dT log P(t, T)."""
    _, _, dlax, dbx = _leg_log_factors(m.x, Leg.X, tau)
    _, _, dlay, dby = _leg_log_factors(m.y, Leg.Y, tau)
    out = -dlax + dbx * np.asarray(x_t, dtype=float) - dlay - dby * np.asarray(y_t, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# conditional moments

def _decay_integral(k: float, dt):
    # (1 - e^{-k dt}) / k, with the k -> 0 limit dt
    dt = np.asarray(dt, dtype=float)
    if k == 0.0:
        return dt
    return -np.expm1(-k * dt) / k


def cir_mean(p: CirParams, z_s, dt):
    dt = np.asarray(dt, dtype=float)
    e = np.exp(-p.k * dt)
    return np.asarray(z_s) * e + p.theta * (1.0 - e)


def cir_var(p: CirParams, z_s, dt):
    dt = np.asarray(dt, dtype=float)
    e = np.exp(-p.k * dt)
    q = _decay_integral(p.k, dt)
    # z sigma^2/k (e^{-k dt} - e^{-2k dt}) + theta sigma^2/(2k) (1 - e^{-k dt})^2
    return np.asarray(z_s) * p.sigma**2 * e * q + 0.5 * p.theta * p.sigma**2 * q * (-np.expm1(-p.k * dt))


def cond_mean(m: DiffModel, x_s, y_s, dt):
    """E_s[r(s + dt)]."""
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be non-negative")
    out = cir_mean(m.x, x_s, dt) - cir_mean(m.y, y_s, dt)
    return float(out) if np.ndim(out) == 0 else out


def cond_var(m: DiffModel, x_s, y_s, dt):
    """Var_s[r(s + dt)]; the legs are independent so variances add."""
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be non-negative")
    out = cir_var(m.x, x_s, dt) + cir_var(m.y, y_s, dt)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Riccati residuals

def riccati_residual(
    t: PhiTriple,
    taus,
    *,
    factors: Callable[[np.ndarray], BondFactors] | None = None,
    step: float = 1e-6,
) -> np.ndarray:
    """
    Residuals of the leg's two Riccati equations on a grid of tau = T - t.

    Returns an array of shape (len(taus), 2): column 0 is the B equation,
    column 1 the log-A equation. Constant CIR coefficients
    (lambda = -k, eta = k theta, gamma = sigma^2, delta = 0) are recovered
    from the triple.

    With ``factors=None`` the derivatives are analytic. Passing a callable
    ``tau -> BondFactors`` switches to central differences of step ``step``;
    this is how alternative or perturbed factor functions are checked.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    p = model_from_phi(t)
    k, s2, kt = p.k, p.sigma**2, p.k * p.theta

    if factors is None:
        log_a, b, dlog_a, db = _phi_log_factors(t.phi1, t.phi2, t.phi3, taus)
    else:
        up, dn, mid = factors(taus + step), factors(taus - step), factors(taus)
        b = np.asarray(mid.b, dtype=float)
        dlog_a = (np.log(up.a) - np.log(dn.a)) / (2.0 * step)
        db = (np.asarray(up.b) - np.asarray(dn.b)) / (2.0 * step)

    # d/dt = -d/dtau
    if t.leg is Leg.X:
        res_b = -1.0 + k * b + db + 0.5 * s2 * b**2
        res_a = -kt * b - dlog_a
    else:
        res_b = 1.0 - k * b - db + 0.5 * s2 * b**2
        res_a = kt * b - dlog_a
    return np.column_stack([res_b, res_a])
