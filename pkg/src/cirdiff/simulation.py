"""
Truncated Euler-Maruyama simulation of the two CIR legs.

    z_{i+1} = z_i + k (theta - z_i) D + sigma sqrt(max(z_i, 0)) dW_i

The state itself is not floored; only the square-root argument is.
The pathwise discount exp(-int_0^t r ds) uses the left-point sum on the
Euler grid.

Paths are simulated in fixed-size blocks. Each (seed, leg, block) triple owns
an independent Philox stream, so the output does not depend on how many
threads run the blocks or in which order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .model import DiffModel

_LEG_KEYS = {"x": 0, "y": 1}
# tolerance for treating a time as a grid point
_GRID_TOL = 1e-9


class GridError(ValueError):
    """A horizon or observation time that does not sit on the Euler grid."""


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    delta: float = 1.0 / 256
    paths: int = 10_000
    seed: int = 0
    record_every: int = 1
    record_times: tuple[float, ...] = ()
    block_size: int = 8192
    workers: int = 1
    trace_paths: int = 0  # leading paths kept at every grid step

    def __post_init__(self):
        object.__setattr__(self, "record_times", tuple(float(t) for t in self.record_times))
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise GridError(f"delta must be positive, got {self.delta}")
        if not self.horizon > 0:
            raise GridError(f"horizon must be positive, got {self.horizon}")
        n = round(self.horizon / self.delta)
        if n < 1 or abs(n * self.delta - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise GridError(f"horizon {self.horizon} is not a multiple of delta {self.delta}")
        if self.paths < 1 or self.block_size < 1 or self.record_every < 1 or self.workers < 1:
            raise ValueError("paths, block_size, record_every and workers must be >= 1")
        if not 0 <= self.trace_paths <= min(self.paths, self.block_size):
            raise ValueError("trace_paths must lie in [0, min(paths, block_size)]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for t in self.record_times:
            if t < 0 or t > self.horizon + _GRID_TOL:
                raise GridError(f"record time {t} outside [0, {self.horizon}]")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.delta)

    @property
    def n_blocks(self) -> int:
        return -(-self.paths // self.block_size)

    def recorded_steps(self) -> np.ndarray:
        steps = set(range(0, self.n_steps + 1, self.record_every))
        steps.add(self.n_steps)
        for t in self.record_times:
            steps.add(int(math.floor(t / self.delta + _GRID_TOL)))
        return np.array(sorted(steps), dtype=np.int64)


def leg_generator(seed: int, leg: str, block: int) -> np.random.Generator:
    """Independent counter-based stream keyed by (seed, leg, block)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_LEG_KEYS[leg], block))
    return np.random.Generator(np.random.Philox(ss))


def gaussian_increments(cfg: SimConfig, block: int = 0, n_steps: int | None = None):
    """
    Standard normals (n_steps, block_paths) for both legs of one block, as
    consumed by ``simulate``. Scale by sqrt(delta) for Brownian increments.
    """
    n_steps = cfg.n_steps if n_steps is None else n_steps
    m = min(cfg.block_size, cfg.paths - block * cfg.block_size)
    gx, gy = leg_generator(cfg.seed, "x", block), leg_generator(cfg.seed, "y", block)
    zx = np.empty((n_steps, m))
    zy = np.empty((n_steps, m))
    for i in range(n_steps):
        zx[i] = gx.standard_normal(m)
        zy[i] = gy.standard_normal(m)
    return zx, zy


@dataclass(frozen=True)
class PathSet:
    """
    Simulated legs at the recorded grid steps.

    ``x``, ``y`` and ``integral`` have shape (paths, len(steps)); ``integral``
    holds the left-point sum of r up to each recorded time. ``trace_x`` and
    ``trace_y`` hold the first ``config.trace_paths`` paths on the full grid.
    """

    model: DiffModel
    config: SimConfig
    steps: np.ndarray
    x: np.ndarray
    y: np.ndarray
    integral: np.ndarray
    trace_x: np.ndarray = field(default=None, repr=False)
    trace_y: np.ndarray = field(default=None, repr=False)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.config.n_steps + 1) * self.config.delta

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.config.delta

    @property
    def r(self) -> np.ndarray:
        return self.x - self.y

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def column(self, t: float) -> int:
        """Index of the recorded column at time t; t must be a recorded grid time."""
        s = t / self.config.delta
        step = round(s)
        if abs(step - s) > _GRID_TOL * max(1.0, s) or t < 0:
            raise GridError(f"time {t} is not on the grid (delta = {self.config.delta})")
        j = np.searchsorted(self.steps, step)
        if j >= self.steps.size or self.steps[j] != step:
            if step > self.steps[-1]:
                raise GridError(f"time {t} beyond the simulated horizon {self.config.horizon}")
            raise GridError(f"time {t} was not recorded; add it to SimConfig.record_times")
        return int(j)

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        j = self.column(t)
        return self.x[:, j], self.y[:, j]

    def pathwise_discount(self, t: float) -> np.ndarray:
        """
        exp(-int_0^t r ds) per path. Off-grid t extends the left-point sum
        from the last grid point below t, which must have been recorded.
        """
        if t < 0 or t > self.config.horizon + _GRID_TOL:
            raise GridError(f"maturity {t} beyond the simulated horizon {self.config.horizon}")
        d = self.config.delta
        below = int(math.floor(t / d + _GRID_TOL))
        j = self.column(below * d)
        extra = t - below * d
        integ = self.integral[:, j]
        if extra > _GRID_TOL * d:
            integ = integ + (self.x[:, j] - self.y[:, j]) * extra
        return np.exp(-integ)

    def save(self, path) -> None:
        """Write ``<path>.npz`` with the arrays and ``<path>.json`` with provenance."""
        path = Path(path)
        np.savez(path.with_suffix(".npz"), steps=self.steps, x=self.x, y=self.y, integral=self.integral)
        meta = {
            "seed": self.config.seed,
            "delta": self.config.delta,
            "M": self.config.paths,
            "horizon": self.config.horizon,
            "block_size": self.config.block_size,
            "scheme": "truncated-euler",
            "model": self.model.to_dict(),
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def _simulate_block(model: DiffModel, cfg: SimConfig, block: int, rec_steps, out) -> None:
    m = min(cfg.block_size, cfg.paths - block * cfg.block_size)
    lo = block * cfg.block_size
    px, py = model.x, model.y
    d = cfg.delta
    sd = math.sqrt(d)
    gx, gy = leg_generator(cfg.seed, "x", block), leg_generator(cfg.seed, "y", block)

    x = np.full(m, px.z0)
    y = np.full(m, py.z0)
    integ = np.zeros(m)
    tmp = np.empty(m)
    xs, ys, js, tx, ty = out
    nt = tx.shape[0] if block == 0 else 0
    if nt:
        tx[:, 0], ty[:, 0] = x[:nt], y[:nt]
    rec_pos = {int(s): j for j, s in enumerate(rec_steps)}
    if 0 in rec_pos:
        xs[lo : lo + m, rec_pos[0]] = x
        ys[lo : lo + m, rec_pos[0]] = y
        js[lo : lo + m, rec_pos[0]] = integ

    for i in range(cfg.n_steps):
        zx = gx.standard_normal(m)
        zy = gy.standard_normal(m)
        integ += (x - y) * d
        # x leg
        np.maximum(x, 0.0, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp *= zx
        tmp *= px.sigma * sd
        x += px.k * (px.theta - x) * d
        x += tmp
        # y leg
        np.maximum(y, 0.0, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp *= zy
        tmp *= py.sigma * sd
        y += py.k * (py.theta - y) * d
        y += tmp
        if nt:
            tx[:, i + 1], ty[:, i + 1] = x[:nt], y[:nt]
        j = rec_pos.get(i + 1)
        if j is not None:
            xs[lo : lo + m, j] = x
            ys[lo : lo + m, j] = y
            js[lo : lo + m, j] = integ


def simulate(model: DiffModel, cfg: SimConfig) -> PathSet:
    steps = cfg.recorded_steps()
    shape = (cfg.paths, steps.size)
    tshape = (cfg.trace_paths, cfg.n_steps + 1)
    out = (np.empty(shape), np.empty(shape), np.empty(shape), np.empty(tshape), np.empty(tshape))
    blocks = range(cfg.n_blocks)
    if cfg.workers > 1 and cfg.n_blocks > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            list(ex.map(lambda b: _simulate_block(model, cfg, b, steps, out), blocks))
    else:
        for b in blocks:
            _simulate_block(model, cfg, b, steps, out)
    for a in out:
        a.flags.writeable = False
    return PathSet(model, cfg, steps, *out)




# ---------------------------------------------------------------------------
# statistics

def _z(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("confidence level must be in (0, 1)")
    return float(stats.norm.ppf(0.5 + 0.5 * level))


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error and a CLT confidence interval."""

    mean: np.ndarray
    std_err: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    level: float

    @classmethod
    def from_samples(cls, samples: np.ndarray, level: float) -> "McEstimate":
        """Samples along axis 0."""
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
        half = _z(level) * se
        return cls(mean, se, mean - half, mean + half, level)

    def contains(self, value) -> np.ndarray:
        return (self.ci_low <= value) & (value <= self.ci_high)


@dataclass(frozen=True)
class DiscountStats:
    maturities: np.ndarray
    estimate: McEstimate

    def to_csv(self, path, analytic=None) -> None:
        """Columns maturity,mc_mean,std_err,ci_low,ci_high,analytic."""
        e = self.estimate
        analytic = np.full(self.maturities.shape, np.nan) if analytic is None else np.asarray(analytic)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["maturity", "mc_mean", "std_err", "ci_low", "ci_high", "analytic"])
            for row in zip(self.maturities, e.mean, e.std_err, e.ci_low, e.ci_high, analytic):
                w.writerow([repr(float(v)) for v in row])


def discount_factors(p: PathSet, maturities, level: float = 0.999) -> DiscountStats:
    """Mean of exp(-int_0^T r ds) over paths, per maturity, with CLT interval."""
    mats = np.atleast_1d(np.asarray(maturities, dtype=float))
    samples = np.column_stack([p.pathwise_discount(float(t)) for t in mats])
    return DiscountStats(mats, McEstimate.from_samples(samples, level))


@dataclass(frozen=True)
class DistributionSummary:
    t: float
    n: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    se: dict = field(default_factory=dict)
    bin_edges: np.ndarray = field(default=None, repr=False)
    density: np.ndarray = field(default=None, repr=False)
    normal_density: np.ndarray = field(default=None, repr=False)

    def moments_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k in ("t", "n", "mean", "variance", "skewness", "excess_kurtosis")}
        row.update({f"se_{k}": v for k, v in self.se.items()})
        return row

    def histogram_to_csv(self, path) -> None:
        centres = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "bin_centre", "density", "normal_density"])
            for row in zip(self.bin_edges[:-1], self.bin_edges[1:], centres, self.density, self.normal_density):
                w.writerow([repr(float(v)) for v in row])


def _jackknife_moments(v: np.ndarray):
    """
    Sample variance, skewness and excess kurtosis with leave-one-out jackknife
    standard errors, computed from power sums of the centred sample.
    """
    n = v.size
    c = v - v.mean()
    s1, s2, s3, s4 = c.sum(), (c**2).sum(), (c**3).sum(), (c**4).sum()

    def shape(n, s1, s2, s3, s4):
        mu = s1 / n
        m2 = s2 / n - mu**2
        m3 = s3 / n - 3 * mu * s2 / n + 2 * mu**3
        m4 = s4 / n - 4 * mu * s3 / n + 6 * mu**2 * s2 / n - 3 * mu**4
        return m2 * n / (n - 1), m3 / m2**1.5, m4 / m2**2 - 3.0

    full = shape(n, s1, s2, s3, s4)
    loo = shape(n - 1, s1 - c, s2 - c**2, s3 - c**3, s4 - c**4)
    se = [math.sqrt((n - 1) / n * float(np.sum((q - q.mean()) ** 2))) for q in loo]
    return full, se


def distribution_summary(p: PathSet, t: float, bins: int = 60) -> DistributionSummary:
    """
    Moments of r(t) with standard errors, a density histogram and the normal
    density with the same mean and variance evaluated at the bin centres.
    """
    r = p.r[:, p.column(t)]
    n = r.size
    mean = float(r.mean())
    (var, skew, kurt), (se_var, se_skew, se_kurt) = _jackknife_moments(r)
    density, edges = np.histogram(r, bins=bins, density=True)
    centres = 0.5 * (edges[:-1] + edges[1:])
    normal = stats.norm.pdf(centres, loc=mean, scale=math.sqrt(var)) if var > 0 else np.zeros_like(centres)
    se = {
        "mean": math.sqrt(var / n),
        "variance": se_var,
        "skewness": se_skew,
        "excess_kurtosis": se_kurt,
    }
    return DistributionSummary(t, n, mean, float(var), float(skew), float(kurt), se, edges, density, normal)
