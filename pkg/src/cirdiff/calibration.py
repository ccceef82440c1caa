"""
Calibration of the 8-vector

    pi = [phi1_x, phi2_x, phi3_x, phi1_y, phi2_y, phi3_y, x0, y0]

to a zero curve by minimising sum_i (P_market(T_i) / P_model(T_i) - 1)^2 over
the admissible polyhedron (bounds plus four linear rows). Working in phi
space keeps every constraint linear.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, least_squares, lsq_linear, minimize

from .marketdata import ZeroCurve
from .model import EPS, DiffModel, _phi_log_factors

log = logging.getLogger(__name__)

PI_NAMES = ("phi1_x", "phi2_x", "phi3_x", "phi1_y", "phi2_y", "phi3_y", "x0", "y0")

#: Rows of A in A @ pi <= 0.
CONSTRAINT_MATRIX = np.array(
    [
        [-1, 1, 0, 0, 0, 0, 0, 0],  # phi2_x - phi1_x <= 0
        [0, 0, 0, 1, -1, 0, 0, 0],  # phi1_y - phi2_y <= 0
        [1, -2, 0, 0, 0, 0, 0, 0],  # phi1_x - 2 phi2_x <= 0
        [0, 0, 0, 1, -2, 0, 0, 0],  # phi1_y - 2 phi2_y <= 0
    ],
    dtype=float,
)
CONSTRAINT_NAMES = (
    "volatility x: phi2_x <= phi1_x",
    "volatility y: phi1_y <= phi2_y",
    "mean-reversion x: phi1_x <= 2*phi2_x",
    "mean-reversion y: phi1_y <= 2*phi2_y",
)

LOWER = np.array([0, 0, 1, 0, 0, 1, 0, 0], dtype=float)

DEFAULT_GUESS = np.array([0.7, 0.65, 1.6, 0.47, 0.53, 1.5, 0.27, 0.28])

# box for multi-start draws
START_BOX = (
    np.array([0.05, 0.05, 1.0, 0.05, 0.05, 1.0, 0.0, 0.0]),
    np.array([2.0, 2.0, 4.0, 2.0, 2.0, 4.0, 0.6, 0.6]),
)

# strict interior kept by the optimiser so that sigma_x, sigma_y, k stay positive
MARGIN = EPS


class InfeasibleGuessError(ValueError):
    pass


def is_admissible(pi) -> tuple[bool, list[str]]:
    """Check bounds and A @ pi <= 0; returns (ok, names of violated constraints)."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (8,):
        raise ValueError(f"expected an 8-vector, got shape {pi.shape}")
    bad = []
    if not np.all(np.isfinite(pi)):
        bad.append("finite")
    for i, name in enumerate(PI_NAMES):
        if i in (2, 5):
            continue
        if not pi[i] >= 0:
            bad.append(f"nonnegative {name}")
    if not pi[2] >= 1:
        bad.append("Feller x: phi3_x >= 1")
    if not pi[5] >= 1:
        bad.append("Feller y: phi3_y >= 1")
    rows = CONSTRAINT_MATRIX @ pi
    for val, name in zip(rows, CONSTRAINT_NAMES):
        if not val <= 0:
            bad.append(name)
    return not bad, bad


def _usable(pi) -> bool:
    # the closed form needs phi1, phi2 > 0 on top of admissibility
    return is_admissible(pi)[0] and min(pi[0], pi[1], pi[3], pi[4]) > 0


def _log_prices(pi, maturities):
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return _log_prices_raw(pi, maturities)


def _log_prices_raw(pi, maturities):
    lax, bx, _, _ = _phi_log_factors(pi[0], pi[1], pi[2], maturities)
    lay, by, _, _ = _phi_log_factors(pi[3], pi[4], pi[5], maturities)
    return lax - bx * pi[6] + lay + by * pi[7]


def model_prices(pi, maturities) -> np.ndarray:
    """P(pi; 0, T) straight from the phi parametrisation."""
    pi = np.asarray(pi, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(_log_prices(pi, np.asarray(maturities, dtype=float)))


def _maturities(curve: ZeroCurve, maturities):
    return curve.maturities.copy() if maturities is None else np.asarray(maturities, dtype=float)


def price_ratios(pi, curve: ZeroCurve, maturities=None) -> np.ndarray:
    m = _maturities(curve, maturities)
    with np.errstate(over="ignore", divide="ignore"):
        return np.asarray(curve.discount(m)) * np.exp(-_log_prices(pi, m))


def objective(pi, curve: ZeroCurve, maturities=None) -> float:
    """Sum of squared relative price errors; +inf outside the admissible set."""
    pi = np.asarray(pi, dtype=float)
    if not _usable(pi):
        return float("inf")
    e = price_ratios(pi, curve, maturities) - 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        v = float(np.dot(e, e))
    return v if np.isfinite(v) else float("inf")


def mre(pi, curve: ZeroCurve, maturities=None) -> float:
    """Mean absolute relative price error (decimal, not percent)."""
    pi = np.asarray(pi, dtype=float)
    if not _usable(pi):
        return float("inf")
    return float(np.mean(np.abs(price_ratios(pi, curve, maturities) - 1.0)))


def _log_price_gradient(pi, tau):
    """d log P(pi; 0, tau) / d pi, shape (len(tau), 8)."""
    g = np.empty((tau.size, 8))
    for off, sign, state in ((0, -1.0, pi[6]), (3, 1.0, pi[7])):
        p1, p2, p3 = pi[off : off + 3]
        u = np.exp(-p1 * tau)
        G = p2 + (p1 - p2) * u
        one_u = -np.expm1(-p1 * tau)
        b = one_u / G
        L = np.log(p1) + (p2 - p1) * tau - np.log(G)
        dG1 = u * (1.0 - (p1 - p2) * tau)
        dG2 = one_u
        dL1 = 1.0 / p1 - tau - dG1 / G
        dL2 = tau - dG2 / G
        dB1 = tau * u / G - one_u * dG1 / G**2
        dB2 = -b * b
        # log P = phi3 L + sign * B * state
        g[:, off] = p3 * dL1 + sign * state * dB1
        g[:, off + 1] = p3 * dL2 + sign * state * dB2
        g[:, off + 2] = L
        g[:, 6 + off // 3] = sign * b
    return g


def objective_gradient(pi, curve: ZeroCurve, maturities=None) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    m = _maturities(curve, maturities)
    ratio = np.asarray(curve.discount(m)) * np.exp(-_log_prices(pi, m))
    # d ratio = -ratio d log P
    w = -2.0 * (ratio - 1.0) * ratio
    return w @ _log_price_gradient(pi, m)


# ---------------------------------------------------------------------------
# projection onto the strict interior

def _project_cone(p, apex, d1, d2):
    """Euclidean projection of a 2-d point onto {apex + a d1 + b d2 : a, b >= 0}."""
    v = p - apex
    M = np.column_stack([d1, d2])
    ab = np.linalg.solve(M, v)
    if np.all(ab >= 0):
        return p.copy()
    best, best_dist = None, np.inf
    for d in (d1, d2):
        s = max(0.0, float(v @ d) / float(d @ d))
        q = apex + s * d
        dist = float(np.sum((p - q) ** 2))
        if dist < best_dist:
            best, best_dist = q, dist
    return best


def project(pi, margin: float = MARGIN) -> np.ndarray:
    """
    Nearest point (Euclidean) of the admissible set shrunk by ``margin``.

    The set is a product of two planar cones (one per leg), two half-lines
    for phi3 and two for the initial states, so each factor is projected on
    its own.
    """
    pi = np.array(pi, dtype=float)
    if pi.shape != (8,) or not np.all(np.isfinite(pi)):
        raise InfeasibleGuessError(f"cannot project {pi!r}")
    e = margin
    # x leg: phi1 - phi2 >= e and 2 phi2 - phi1 >= e; apex where both bind
    pi[0:2] = _project_cone(pi[0:2], np.array([3 * e, 2 * e]), np.array([1.0, 1.0]), np.array([2.0, 1.0]))
    # y leg: phi1 >= e and phi2 - phi1 >= e (which implies 2 phi2 - phi1 >= e)
    pi[3:5] = _project_cone(pi[3:5], np.array([e, 2 * e]), np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    pi[2] = max(pi[2], 1.0)
    pi[5] = max(pi[5], 1.0)
    pi[6] = max(pi[6], 0.0)
    pi[7] = max(pi[7], 0.0)
    if not _usable(pi):
        raise InfeasibleGuessError(f"projection failed for {pi!r}")
    return pi


# ---------------------------------------------------------------------------
# optimisation

@dataclass(frozen=True)
class CalibrationOptions:
    method: str = "varpro"  # "varpro", "slsqp" or "penalty"
    max_iter: int = 500
    gtol: float = 1e-10
    xtol: float = 1e-12
    multistart: int = 0
    seed: int = 0
    workers: int = 1


@dataclass
class CalibrationResult:
    pi_star: np.ndarray
    model: DiffModel
    objective: float
    mre: float
    iterations: int
    converged: bool
    wall_time: float
    guess: np.ndarray = field(repr=False)
    guess_projected: bool = False
    message: str = ""

    def to_json(self) -> dict:
        return {
            "pi_star": [float(v) for v in self.pi_star],
            "model": self.model.to_dict(),
            "objective": float(self.objective),
            "mre": float(self.mre),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "wall_time_s": float(self.wall_time),
        }


def _bounds(margin):
    lo = LOWER.copy()
    lo[[0, 1, 3, 4]] = margin
    return Bounds(lo, np.full(8, np.inf))


def _run_slsqp(f, grad, x0, opts, margin):
    A = CONSTRAINT_MATRIX
    cons = [{"type": "ineq", "fun": lambda p: -(A @ p) - margin, "jac": lambda p: -A}]
    with warnings.catch_warnings():
        # SLSQP clips its own line-search probes to the bounds and says so each time
        warnings.filterwarnings("ignore", message="Values in x were outside bounds")
        res = minimize(
            f, x0, jac=grad, method="SLSQP", bounds=_bounds(margin), constraints=cons,
            options={"maxiter": opts.max_iter, "ftol": 1e-30},
        )
    return res.x, res.nit, res.success or res.status == 0, res.message


def _run_penalty(f, grad, x0, opts, margin):
    """Quadratic penalty on the linear rows, bounds handled by L-BFGS-B, then projection."""
    A = CONSTRAINT_MATRIX
    x = x0.copy()
    nit, ok, msg = 0, False, ""
    for mu in (1e2, 1e4, 1e6, 1e8):
        def fp(p, mu=mu):
            v = np.maximum(A @ p + margin, 0.0)
            return f(p) + mu * float(v @ v)

        def gp(p, mu=mu):
            v = np.maximum(A @ p + margin, 0.0)
            return grad(p) + 2.0 * mu * (A.T @ v)

        res = minimize(
            fp, x, jac=gp, method="L-BFGS-B", bounds=list(zip(_bounds(margin).lb, [None] * 8)),
            options={"maxiter": opts.max_iter, "gtol": opts.gtol, "ftol": 1e-30},
        )
        x, nit, ok, msg = res.x, nit + res.nit, res.success, res.message
    return project(x, margin), nit, ok, msg


# box coordinates v = (phi1_x, phi2_x/phi1_x, phi2_y, phi1_y/phi2_y) turn the four
# linear rows into bounds; given v, log P is linear in (phi3_x, phi3_y, x0, y0)
_V_LB = np.array([MARGIN, 0.5, MARGIN, MARGIN])
_V_UB = np.array([np.inf, 1.0, np.inf, 1.0])
_LIN_LB = np.array([1.0, 1.0, 0.0, 0.0])


def _to_box(pi):
    return np.clip([pi[0], pi[1] / pi[0], pi[4], pi[3] / pi[4]], _V_LB, _V_UB)


def _from_box(v, lin):
    p1x, sx, p2y, sy = v
    return np.array([p1x, sx * p1x, lin[0], sy * p2y, p2y, lin[1], lin[2], lin[3]])


def _run_varpro(curve, mats, x0, opts, margin):
    """
    Separable least squares on log prices, then a polish on the exact objective.

    The outer search runs over the four box coordinates only; for each
    trial the linear block (phi3_x, phi3_y, x0, y0) is the bounded linear
    least-squares fit of the log market prices. This removes the flat
    phi3 / initial-state directions that make the joint problem badly
    conditioned.
    """
    log_pm = np.log(np.asarray(curve.discount(mats)))

    def inner(v):
        p1x, sx, p2y, sy = v
        lx, bx, _, _ = _phi_log_factors(p1x, sx * p1x, 1.0, mats)
        ly, by, _, _ = _phi_log_factors(sy * p2y, p2y, 1.0, mats)
        basis = np.column_stack([lx, ly, -bx, by])
        sol = lsq_linear(basis, log_pm, bounds=(_LIN_LB, np.inf), method="bvls", tol=1e-15)
        return sol.x, basis @ sol.x - log_pm

    outer = least_squares(
        lambda v: inner(v)[1], _to_box(x0), bounds=(_V_LB, _V_UB), method="trf",
        x_scale="jac", diff_step=1e-7, ftol=1e-15, xtol=opts.xtol, gtol=opts.gtol,
        max_nfev=opts.max_iter,
    )
    lin, _ = inner(outer.x)
    x1 = project(_from_box(outer.x, lin), margin)

    # polish on sum (P_M / P - 1)^2 in the same box coordinates
    pm = np.asarray(curve.discount(mats))
    u_lb = np.concatenate([_V_LB, _LIN_LB])
    u_ub = np.concatenate([_V_UB, np.full(4, np.inf)])

    def split(u):
        return _from_box(u[:4], u[4:])

    def res(u):
        return pm * np.exp(-_log_prices(split(u), mats)) - 1.0

    def jac(u):
        p = split(u)
        ratio = pm * np.exp(-_log_prices(p, mats))
        g = -ratio[:, None] * _log_price_gradient(p, mats)
        # chain rule d pi / d u
        d = np.zeros((8, 8))
        d[0, 0], d[1, 0], d[1, 1] = 1.0, u[1], u[0]
        d[4, 2], d[3, 2], d[3, 3] = 1.0, u[3], u[2]
        d[2, 4], d[5, 5], d[6, 6], d[7, 7] = 1.0, 1.0, 1.0, 1.0
        return g @ d

    u1 = np.clip(np.concatenate([_to_box(x1), x1[[2, 5, 6, 7]]]), u_lb, u_ub)
    pol = least_squares(
        res, u1, jac=jac, bounds=(u_lb, u_ub), method="trf", x_scale="jac",
        ftol=1e-15, xtol=opts.xtol, gtol=opts.gtol, max_nfev=opts.max_iter,
    )
    x2 = project(split(pol.x), margin)
    x = x2 if objective(x2, curve, mats) <= objective(x1, curve, mats) else x1
    # the polish only sharpens the varpro point; running out of evaluations
    # while crawling along a flat valley (< 1% gain) is not a failure
    cost0 = 0.5 * float(np.sum(res(u1) ** 2))
    stalled = pol.cost >= (1.0 - 1e-2) * cost0
    ok = outer.status > 0 and (pol.status > 0 or stalled)
    return x, outer.nfev + pol.nfev, ok, f"{outer.message} / {pol.message}"


_METHODS = {"varpro": None, "slsqp": _run_slsqp, "penalty": _run_penalty}


def _single(curve, mats, x0, opts, margin):
    def f(p):
        v = objective(p, curve, mats)
        # SLSQP may probe slightly outside the polyhedron; evaluate on the projection there
        if not np.isfinite(v):
            v = objective(project(p, margin), curve, mats)
        return v

    def grad(p):
        if not _usable(p):
            p = project(p, margin)
        return objective_gradient(p, curve, mats)

    if opts.method == "varpro":
        x, nit, ok, msg = _run_varpro(curve, mats, x0, opts, margin)
    else:
        x, nit, ok, msg = _METHODS[opts.method](f, grad, x0, opts, margin)
    if not _usable(x) or min(-(CONSTRAINT_MATRIX @ x)) < 0:
        x = project(x, margin)
    fx = objective(x, curve, mats)
    f0 = objective(x0, curve, mats)
    if not fx <= f0:
        # never return something worse than the starting point
        x, fx = x0.copy(), f0
    return x, fx, nit, bool(ok), str(msg)


def calibrate(
    curve: ZeroCurve,
    maturities=None,
    guess=None,
    options: CalibrationOptions | None = None,
) -> CalibrationResult:
    """
    Fit pi to ``curve`` at ``maturities`` (default: the curve pillars).

    An inadmissible guess is projected onto the admissible set first (with a
    warning). With ``options.multistart = N > 0`` the guess is joined by N
    projected uniform draws from ``START_BOX``; the lowest objective wins,
    ties going to the earlier start so the outcome does not depend on the
    number of workers.
    """
    opts = options or CalibrationOptions()
    if opts.method not in _METHODS:
        raise ValueError(f"unknown method {opts.method!r}; choose from {sorted(_METHODS)}")
    mats = _maturities(curve, maturities)
    if np.any(mats <= 0) or np.any(mats > curve.last + 1e-12):
        raise ValueError("calibration maturities must lie in (0, last pillar]")
    t0 = time.perf_counter()

    raw = DEFAULT_GUESS.copy() if guess is None else np.asarray(guess, dtype=float)
    if raw.shape != (8,):
        raise InfeasibleGuessError(f"guess must have 8 entries, got {raw.shape}")
    x0 = project(raw)
    projected = not np.array_equal(x0, raw)
    if projected:
        log.warning("initial guess is not admissible; projected onto the admissible set")

    starts = [x0]
    if opts.multistart > 0:
        rng = np.random.default_rng(opts.seed)
        lo, hi = START_BOX
        for _ in range(opts.multistart):
            starts.append(project(rng.uniform(lo, hi)))

    def job(x):
        return _single(curve, mats, x, opts, MARGIN)

    if opts.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as ex:
            runs = list(ex.map(job, starts))
    else:
        runs = [job(x) for x in starts]

    best = min(range(len(runs)), key=lambda i: (runs[i][1], i))
    x, fx, nit, ok, msg = runs[best]
    return CalibrationResult(
        pi_star=x,
        model=DiffModel.from_pi(x),
        objective=fx,
        mre=mre(x, curve, mats),
        iterations=int(sum(r[2] for r in runs)),
        converged=ok,
        wall_time=time.perf_counter() - t0,
        guess=x0,
        guess_projected=projected,
        message=msg,
    )


def synthetic_curve(model: DiffModel, maturities) -> ZeroCurve:
    """A curve whose discount factors are exactly the model's P(0, T)."""
    from .model import zcb_price

    m = np.asarray(maturities, dtype=float)
    return ZeroCurve.from_discounts(m, zcb_price(model, model.x.z0, model.y.z0, m))
