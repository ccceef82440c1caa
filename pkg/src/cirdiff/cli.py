"""
Batch command line: bootstrap -> calibrate -> simulate -> price.

Every subcommand reads an optional JSON config; flags given on the command
line win over config keys. Outputs are CSV files plus JSON reports in the
output directory. Exit codes: 0 success, 1 numeric failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationOptions, calibrate, model_prices
from .marketdata import BootstrapError, QuoteError, ZeroCurve, bootstrap, load_quotes
from .model import DiffModel, zcb_price
from .pricing import load_swaption_market, model_forward_zcb, swaption_grid_report
from .simulation import GridError, SimConfig, discount_factors, distribution_summary, simulate

log = logging.getLogger("cirdiff")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad flag, config key or input file; maps to exit code 2."""


class NumericFailure(Exception):
    """Calibration did not converge; maps to exit code 1."""


@dataclass
class RunConfig:
    out: Path = Path("out")
    date: date | None = None
    quotes: Path | None = None
    curve: Path | None = None
    model: Path | None = None  # calibration JSON to reuse instead of calibrating
    guess: list | None = None
    multistart: int = 0
    calibration_seed: int = 0
    max_iter: int = 500
    seed: int = 0
    delta: float = 1.0 / 256
    paths: int = 10_000
    horizon: float = 30.0
    workers: int = 1
    block_size: int = 8192
    confidence: float = 0.999
    distribution_time: float | None = None
    histogram_bins: int = 60
    trace_paths: int = 16
    forward_times: list = field(default_factory=lambda: [1.0, 3.0, 5.0])
    forward_confidence: float = 0.99
    swaptions: Path | None = None
    swaption_confidence: float = 0.99

    def validate(self, need_source: bool = True) -> None:
        if self.quotes is not None and self.curve is not None:
            raise InputError("give either quotes or curve, not both")
        if need_source and self.quotes is None and self.curve is None and self.model is None:
            raise InputError("no market data: set quotes or curve")
        for name in ("quotes", "curve", "model"):
            p = getattr(self, name)
            if p is not None and not p.is_file():
                raise InputError(f"{name} file not found: {p}")
        if self.guess is not None and len(self.guess) != 8:
            raise InputError(f"guess needs 8 values, got {len(self.guess)}")
        if self.paths < 1 or self.workers < 1 or self.multistart < 0:
            raise InputError("paths and workers must be >= 1, multistart >= 0")


_PATH_KEYS = {"out", "quotes", "curve", "model", "swaptions"}


def _parse_guess(text) -> list:
    if isinstance(text, list):
        vals = text
    else:
        vals = [v for v in str(text).split(",") if v.strip()]
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise InputError(f"guess must be 8 comma-separated floats, got {text!r}") from None


def load_config(path: Path | None, overrides: dict) -> RunConfig:
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise InputError(f"{path}: top level must be an object")
        base = path.parent
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")

    vals = {}
    for k, v in raw.items():
        if k in _PATH_KEYS and v is not None:
            p = Path(v)
            vals[k] = p if p.is_absolute() else base / p
        else:
            vals[k] = v
    for k, v in overrides.items():
        if v is not None:
            vals[k] = Path(v) if k in _PATH_KEYS else v

    try:
        if vals.get("date") is not None and not isinstance(vals["date"], date):
            vals["date"] = date.fromisoformat(str(vals["date"]))
    except ValueError:
        raise InputError(f"date must be ISO yyyy-mm-dd, got {vals['date']!r}") from None
    if "guess" in vals and vals["guess"] is not None:
        vals["guess"] = _parse_guess(vals["guess"])
    for k in ("delta", "horizon", "confidence", "forward_confidence", "swaption_confidence"):
        if k in vals:
            vals[k] = float(vals[k])
    for k in ("paths", "seed", "workers", "multistart", "block_size", "trace_paths", "max_iter"):
        if k in vals:
            vals[k] = int(vals[k])
    if "forward_times" in vals:
        vals["forward_times"] = [float(t) for t in vals["forward_times"]]
    return RunConfig(**vals)


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class Pipeline:
    """Lazily builds curve, model and paths so each subcommand runs only what it needs."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.outputs: list[Path] = []
        self._curve = None
        self._model = None
        self._paths = None
        cfg.out.mkdir(parents=True, exist_ok=True)

    def _emit(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    # market data
    def curve(self) -> ZeroCurve:
        if self._curve is None:
            c = self.cfg
            try:
                if c.curve is not None:
                    self._curve = ZeroCurve.read_csv(c.curve)
                elif c.quotes is not None:
                    self._curve = bootstrap(load_quotes(c.quotes, c.date))
                else:
                    raise InputError("no market data: set quotes or curve")
            except (QuoteError, OSError) as exc:
                raise InputError(str(exc)) from None
        return self._curve

    def cmd_bootstrap(self) -> None:
        if self.cfg.quotes is None:
            raise InputError("bootstrap needs a quotes file")
        self.curve().to_csv(self._emit(self.cfg.out / "curve.csv"))

    # calibration
    def model(self) -> DiffModel:
        if self._model is None:
            if self.cfg.model is not None:
                try:
                    d = json.loads(self.cfg.model.read_text(encoding="utf-8"))
                    self._model = DiffModel.from_dict(d.get("model", d))
                except (ValueError, KeyError, TypeError) as exc:
                    raise InputError(f"{self.cfg.model}: cannot read model ({exc})") from None
            else:
                self.cmd_calibrate()
        return self._model

    def cmd_calibrate(self) -> None:
        c = self.cfg
        curve = self.curve()
        opts = CalibrationOptions(multistart=c.multistart, seed=c.calibration_seed,
                                  workers=c.workers, max_iter=c.max_iter)
        res = calibrate(curve, guess=c.guess, options=opts)
        self._model = res.model
        report = res.to_json()
        report.pop("wall_time_s")
        report["guess"] = [float(v) for v in res.guess]
        report["guess_projected"] = res.guess_projected
        report["maturities"] = [float(v) for v in curve.maturities]
        _write_json(self._emit(c.out / "calibration.json"), report)
        mats = curve.maturities
        market = curve.discounts
        model = model_prices(res.pi_star, mats)
        _write_rows(self._emit(c.out / "fit.csv"),
                    ["maturity_years", "market_price", "model_price", "abs_error"],
                    zip(mats, market, model, np.abs(model - market)))
        log.info("calibration: objective %.6e, MRE %.4f%%", res.objective, 100 * res.mre)
        if not res.converged:
            raise NumericFailure(f"calibration did not converge: {res.message}")

    # simulation
    def _record_times(self) -> list[float]:
        c = self.cfg
        times = list(self._df_maturities())
        times += [t for t in c.forward_times if t <= c.horizon]
        if c.distribution_time is not None:
            times.append(c.distribution_time)
        if c.swaptions is not None and c.swaptions.is_file():
            with c.swaptions.open(encoding="utf-8") as fh:
                rows = list(csv.reader(fh))[1:]
            times += [float(r[0]) for r in rows if r and r[0].strip() and float(r[0]) <= c.horizon]
        return sorted(set(float(t) for t in times))

    def _df_maturities(self) -> np.ndarray:
        # curve pillars when there is a curve, a fixed ladder otherwise
        src = self.curve().maturities if self._has_curve() else (1.0, 2.0, 5.0, 10.0, 20.0, 30.0)
        return np.array([t for t in src if t <= self.cfg.horizon])

    def _has_curve(self) -> bool:
        return self.cfg.curve is not None or self.cfg.quotes is not None

    def paths(self):
        if self._paths is None:
            c = self.cfg
            model = self.model()
            sim = SimConfig(horizon=c.horizon, delta=c.delta, paths=c.paths, seed=c.seed,
                            record_every=max(1, round(c.horizon / c.delta)),
                            record_times=tuple(self._record_times()), block_size=c.block_size,
                            workers=c.workers, trace_paths=min(c.trace_paths, c.paths, c.block_size))
            self._paths = simulate(model, sim)
        return self._paths

    def cmd_simulate(self) -> None:
        c = self.cfg
        try:
            SimConfig(horizon=c.horizon, delta=c.delta, paths=c.paths, seed=c.seed)
        except (GridError, ValueError) as exc:
            raise InputError(str(exc)) from None
        model = self.model()
        p = self.paths()
        mats = self._df_maturities()
        ds = discount_factors(p, mats, c.confidence)
        analytic = zcb_price(model, model.x.z0, model.y.z0, mats)
        ds.to_csv(self._emit(c.out / "discount_factors.csv"), analytic)
        if self._has_curve():
            e = ds.estimate
            _write_rows(self._emit(c.out / "discount_vs_market.csv"),
                        ["maturity", "market", "model_analytic", "mc_mean", "ci_low", "ci_high", "mc_minus_market"],
                        zip(mats, self.curve().discount(mats), analytic, e.mean, e.ci_low, e.ci_high,
                            e.mean - self.curve().discount(mats)))

        t = c.horizon if c.distribution_time is None else c.distribution_time
        s = distribution_summary(p, t, c.histogram_bins)
        row = s.moments_row()
        _write_rows(self._emit(c.out / "distribution_moments.csv"), list(row), [list(row.values())])
        s.histogram_to_csv(self._emit(c.out / "distribution_histogram.csv"))

        # example trajectory: the first traced path that goes negative, else path 0
        if p.trace_x.shape[0]:
            r = p.trace_x - p.trace_y
            neg = np.flatnonzero((r < 0).any(axis=1))
            i = int(neg[0]) if neg.size else 0
            _write_rows(self._emit(c.out / "trajectory.csv"), ["t", "x", "y", "r"],
                        zip(p.grid, p.trace_x[i], p.trace_y[i], r[i]))

    # pricing
    def cmd_price(self) -> None:
        c = self.cfg
        model = self.model()
        p = self.paths()
        curve = self.curve() if self._has_curve() else None
        for t in c.forward_times:
            if t > c.horizon:
                warnings.warn(f"forward time {t} beyond horizon, skipped", stacklevel=2)
                continue
            if curve is not None:
                mats = np.array([T for T in curve.maturities if T > t])
            else:
                mats = t + np.array([1.0, 2.0, 5.0, 10.0, 20.0])
            if mats.size == 0:
                continue
            fz = model_forward_zcb(model, p, t, mats, c.forward_confidence, curve)
            fz.to_csv(self._emit(c.out / f"forward_zcb_t{t:g}.csv"))
        if c.swaptions is None or not c.swaptions.is_file():
            warnings.warn("no swaption market grid supplied; swaption step skipped", stacklevel=2)
            return
        if curve is None:
            raise InputError("swaption pricing needs a curve")
        try:
            market = load_swaption_market(c.swaptions)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        grid = swaption_grid_report(model, p, curve, market, c.swaption_confidence)
        grid.to_csv(self._emit(c.out / "swaptions.csv"))

    def cmd_report(self) -> None:
        if self.cfg.quotes is not None:
            self.cmd_bootstrap()
        try:
            self.cmd_calibrate()
        except (NumericFailure, BootstrapError) as exc:
            # keep going so the rest of the report exists, but fail at the end
            self._failure = exc
        self.cmd_simulate()
        self.cmd_price()
        self.write_manifest()
        if getattr(self, "_failure", None):
            raise self._failure

    def write_manifest(self) -> None:
        c = self.cfg
        cfg = {k: (str(v) if isinstance(v, (Path, date)) else v) for k, v in vars(c).items()}
        cfg.pop("workers")  # does not affect any output
        cfg.pop("out")
        manifest = {
            "version": __version__,
            "config": cfg,
            "model": self.model().to_dict(),
            "outputs": sorted(p.name for p in self.outputs),
        }
        _write_json(c.out / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cirdiff", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config; flags override its keys")
    common.add_argument("--out", help="output directory")
    common.add_argument("--date", help="valuation date, ISO format")
    common.add_argument("--quotes", help="quotes CSV (type,tenor_years,rate)")
    common.add_argument("--curve", help="zero curve CSV (maturity_years,zero_rate,discount)")
    common.add_argument("--model", help="calibration JSON to reuse")
    common.add_argument("--guess", help="8 comma-separated floats")
    common.add_argument("--multistart", type=int)
    common.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
    common.add_argument("--delta", type=float, help="Euler step in years")
    common.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    common.add_argument("--horizon", type=float, help="simulation horizon in years")
    common.add_argument("--workers", type=int, help="threads; outputs do not depend on it")
    common.add_argument("--swaptions", help="swaption market CSV")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [
        ("bootstrap", "build the zero curve from quotes"),
        ("calibrate", "fit the model to the zero curve"),
        ("simulate", "Monte Carlo discount factors, distribution and a trajectory"),
        ("price", "forward zero-coupon prices and the swaption grid"),
        ("report", "run every step and write a manifest"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return ap


_OVERRIDES = ("out", "date", "quotes", "curve", "model", "guess", "multistart", "seed",
              "delta", "paths", "horizon", "workers", "swaptions")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        cfg = load_config(args.config, {k: getattr(args, k) for k in _OVERRIDES})
        cfg.validate(need_source=args.command != "simulate" or cfg.model is None)
        pipe = Pipeline(cfg)
        getattr(pipe, f"cmd_{args.command}")()
        if args.command in ("calibrate", "simulate", "price"):
            pipe.write_manifest()
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GridError, QuoteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericFailure, BootstrapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
