"""Seeded Monte Carlo experiments, accuracy metrics and CSV emitters.

Every realization is regenerated from ``base_seed + run_index`` alone, so a
sweep gives identical records whether runs execute serially or in a process
pool. For each run one record of length ``max(n_list)`` is drawn and the
smaller sample sizes use its prefixes.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .arx import DEFAULT_AIC_GRID, aic_select_order, recommended_order
from .model import BjModel, ThetaVector, sec51_model, sec52_model
from .pem import gn_refine
from .poly import Polynomial, RationalFilter
from .sd import sd_estimate
from .signals import (
    InputSpec,
    gen_closed_loop,
    gen_open_loop,
    lowpass_input,
    sample_random_bj,
)

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "EXPERIMENTS",
    "ESTIMATORS",
    "BENCH_GN",
    "fit_metric",
    "mse_dynamic",
    "generate_realization",
    "run_single",
    "run_experiment",
    "summarize",
    "emit_plot_data",
    "write_outputs",
]

EXPERIMENTS = ("sec51_open", "sec51_closed", "sec52_oscillatory", "sec53_random")
ESTIMATORS = ("sd", "sdgn", "pem_true", "pem_default")

# expected-improvement stop at 1e-4 percent, max 100 iterations
BENCH_GN = {"criterion": "improvement", "tol": 1e-6, "max_iter": 100}

_DEFAULTS = {
    "sec51_open": {"n_list": [300, 600, 1000, 3000, 6000, 10000], "order_mode": "fixed:50", "snr": None},
    "sec51_closed": {"n_list": [300, 600, 1000, 3000, 6000, 10000], "order_mode": "fixed:50", "snr": None},
    "sec52_oscillatory": {"n_list": [2500, 5000, 10000, 20000], "order_mode": "aic", "snr": 3.0},
    "sec53_random": {"n_list": [2500, 5000, 10000, 20000], "order_mode": "aic", "snr": 5.0},
}


def fit_metric(theta_hat, theta_true) -> float:
    """``100 (1 - |theta_hat - theta| / |theta - mean(theta)|)``."""
    th = _flat(theta_hat)
    t0 = _flat(theta_true)
    if th.shape != t0.shape:
        raise ValueError("parameter vectors differ in layout")
    den = np.linalg.norm(t0 - t0.mean())
    if den == 0.0:
        raise ValueError("true parameter vector is constant; Fit is undefined")
    return float(100.0 * (1.0 - np.linalg.norm(th - t0) / den))


def mse_dynamic(theta_hat: ThetaVector, theta_true: ThetaVector) -> float:
    """Squared error over the dynamics parameters ``[f; b]`` only."""
    if theta_hat.orders != theta_true.orders:
        raise ValueError("parameter vectors differ in layout")
    df = theta_hat.f - theta_true.f
    db = theta_hat.b - theta_true.b
    return float(df @ df + db @ db)


def _flat(theta):
    return theta.flat if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float).ravel()


@dataclass
class ExperimentConfig:
    experiment: str
    n_list: list[int] | None = None
    runs: int = 10
    base_seed: int = 0
    order_mode: str | None = None
    estimators: list[str] = field(default_factory=lambda: ["sd", "sdgn"])
    snr: float | None = None
    output_dir: str = "bjsd_out"
    gn_criterion: str = BENCH_GN["criterion"]
    gn_tol: float = BENCH_GN["tol"]
    gn_max_iter: int = BENCH_GN["max_iter"]
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        defaults = _DEFAULTS[self.experiment]
        if self.n_list is None:
            self.n_list = list(defaults["n_list"])
        if self.order_mode is None:
            self.order_mode = defaults["order_mode"]
        if self.snr is None:
            self.snr = defaults["snr"]
        self.n_list = [int(n) for n in self.n_list]
        if not self.n_list or self.n_list != sorted(self.n_list):
            raise ValueError("n_list must be non-empty and ascending")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        parse_order_mode(self.order_mode)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def parse_order_mode(mode: str):
    """``"fixed:K"``, ``"aic"``, ``"aic:10,20,30"``, ``"aic:full"`` or ``"rec"``."""
    kind, _, arg = mode.partition(":")
    if kind == "fixed":
        if not arg.isdigit() or int(arg) < 1:
            raise ValueError(f"bad fixed order {mode!r}")
        return ("fixed", int(arg))
    if kind == "aic":
        if not arg:
            return ("aic", tuple(DEFAULT_AIC_GRID))
        if arg == "full":
            return ("aic", None)
        return ("aic", tuple(int(v) for v in arg.split(",")))
    if kind == "rec":
        return ("rec", None)
    raise ValueError(f"unknown order mode {mode!r}")


def select_order(mode, u, y, truth: BjModel) -> int:
    kind, arg = parse_order_mode(mode)
    n = len(y)
    if kind == "fixed":
        return arg
    if kind == "rec":
        return recommended_order(truth.rho, n)
    grid = arg if arg is not None else range(1, (n - 1) // 2 + 1)
    return aic_select_order(u, y, grid)[0]


@dataclass
class RunRecord:
    experiment: str
    run_index: int
    n: int
    seed: int
    m: int
    estimator: str
    fit: float
    mse_dynamic: float
    gn_iterations: int | None
    converged: bool | None
    flags: list[str]
    theta: list[float]
    wall_time_seconds: float

    CSV_FIELDS = (
        "experiment",
        "run_index",
        "n",
        "seed",
        "m",
        "estimator",
        "fit",
        "mse_dynamic",
        "gn_iterations",
        "converged",
        "flags",
        "theta",
        "wall_time_seconds",
    )
    TIMING_FIELDS = ("wall_time_seconds",)

    def csv_row(self):
        def num(x):
            return "" if x is None else repr(float(x))

        return [
            self.experiment,
            self.run_index,
            self.n,
            self.seed,
            self.m,
            self.estimator,
            num(self.fit),
            num(self.mse_dynamic),
            "" if self.gn_iterations is None else self.gn_iterations,
            "" if self.converged is None else int(self.converged),
            ";".join(self.flags),
            json.dumps([float(v) for v in self.theta]),
            num(self.wall_time_seconds),
        ]

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.fit)


def generate_realization(config: ExperimentConfig, run_index: int):
    """Full-length dataset for one run (``seed = base_seed + run_index``)."""
    seed = config.base_seed + run_index
    n = max(config.n_list)
    exp = config.experiment
    if exp == "sec51_open":
        return gen_open_loop(sec51_model(), InputSpec("sensitivity"), n, seed)
    if exp == "sec51_closed":
        K = RationalFilter(Polynomial([1.0]), Polynomial([1.0]))
        return gen_closed_loop(sec51_model(), K, 1.0, n, seed)
    if exp == "sec52_oscillatory":
        return gen_open_loop(sec52_model(), lowpass_input(0.85), n, seed, snr=config.snr, snr_mode="raw_noise")
    model = sample_random_bj((4, 2, 2, 4), seed)
    return gen_open_loop(model, lowpass_input(0.8), n, seed, snr=config.snr, snr_mode="filtered_noise")


def _nan_theta(orders):
    return ThetaVector(*(np.full(p, np.nan) for p in orders))


def run_single(config: ExperimentConfig, run_index: int) -> list[RunRecord]:
    """All records (every n, every estimator) of one realization."""
    full = generate_realization(config, run_index)
    truth = full.truth
    theta0 = truth.theta
    gn_kw = {"max_iter": config.gn_max_iter, "tol": config.gn_tol, "criterion": config.gn_criterion}
    out = []
    for n in config.n_list:
        data = full.prefix(n)
        u, y = data.u, data.y

        def record(name, m, theta, seconds, report=None, flags=()):
            flags = list(flags) + ([] if report is None else list(report.flags))
            fit = fit_metric(theta, theta0) if np.all(np.isfinite(theta.flat)) else math.nan
            mse = mse_dynamic(theta, theta0) if math.isfinite(fit) else math.nan
            out.append(
                RunRecord(
                    config.experiment,
                    run_index,
                    n,
                    data.seed,
                    m,
                    name,
                    fit,
                    mse,
                    None if report is None else report.iterations,
                    None if report is None else report.converged,
                    flags,
                    theta.flat.tolist(),
                    seconds,
                )
            )

        try:
            m = select_order(config.order_mode, u, y, truth)
        except Exception as exc:  # noqa: BLE001
            for name in config.estimators:
                record(name, 0, _nan_theta(truth.orders), math.nan, flags=[f"error:{type(exc).__name__}"])
            continue

        sd = None
        sd_time = math.nan
        sd_error = None
        if {"sd", "sdgn", "pem_default"} & set(config.estimators):
            t = time.perf_counter()
            try:
                sd = sd_estimate(u, y, truth.orders, m)
            except Exception as exc:  # noqa: BLE001
                sd_error = f"error:{type(exc).__name__}"
            sd_time = time.perf_counter() - t

        for name in config.estimators:
            if name == "sd":
                if sd is None:
                    record(name, m, _nan_theta(truth.orders), sd_time, flags=[sd_error])
                else:
                    record(name, m, sd.theta, sd_time, flags=sd.flags)
                continue
            if name == "pem_true":
                init = theta0
            elif sd is None:
                record(name, m, _nan_theta(truth.orders), math.nan, flags=[sd_error])
                continue
            elif name == "sdgn":
                init = sd.theta
            else:
                # crude start: SD dynamics with a white-noise model C = D = 1
                th = sd.theta
                init = ThetaVector(th.b, np.zeros(th.c.size), np.zeros(th.d.size), th.f)
            t = time.perf_counter()
            try:
                policy = "min_norm" if name == "pem_default" else "stop"
                rep = gn_refine(init, u, y, singular=policy, **gn_kw)
            except Exception as exc:  # noqa: BLE001
                record(name, m, _nan_theta(truth.orders), math.nan, flags=[f"error:{type(exc).__name__}"])
                continue
            seconds = time.perf_counter() - t
            if name == "sdgn":
                seconds += sd_time
            record(name, m, rep.theta, seconds, report=rep)
    return out


def run_experiment(config: ExperimentConfig):
    """Run every realization; returns ``(records, summary_rows)``."""
    indices = range(config.runs)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            chunks = list(pool.map(run_single, [config] * config.runs, indices))
    else:
        chunks = [run_single(config, i) for i in indices]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.n, config.estimators.index(r.estimator), r.run_index))
    return records, summarize(records)


SUMMARY_FIELDS = (
    "n",
    "estimator",
    "label",
    "runs",
    "failures",
    "mean_fit",
    "median_fit",
    "mean_mse_dynamic",
    "mean_wall_time_seconds",
    "mean_gn_iterations",
    "unstable_flags",
)


# the default-initialized PEM column is only an approximation of a toolbox initializer
LABELS = {"pem_default": "pem_default(approx)"}


def summarize(records) -> list[dict]:
    """Averages per (n, estimator); failed runs are excluded and counted."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.n, r.estimator), []).append(r)
    rows = []
    for (n, est), rs in groups.items():
        ok = [r for r in rs if not r.failed]
        fits = np.array([r.fit for r in ok])
        iters = [r.gn_iterations for r in ok if r.gn_iterations is not None]
        times = [r.wall_time_seconds for r in ok if math.isfinite(r.wall_time_seconds)]
        rows.append(
            {
                "n": n,
                "estimator": est,
                "label": LABELS.get(est, est),
                "runs": len(rs),
                "failures": len(rs) - len(ok),
                "mean_fit": float(np.mean(fits)) if ok else math.nan,
                "median_fit": float(np.median(fits)) if ok else math.nan,
                "mean_mse_dynamic": float(np.mean([r.mse_dynamic for r in ok])) if ok else math.nan,
                "mean_wall_time_seconds": float(np.mean(times)) if times else math.nan,
                "mean_gn_iterations": float(np.mean(iters)) if iters else math.nan,
                "unstable_flags": sum(any(f.startswith(("unstable", "repaired")) for f in r.flags) for r in rs),
            }
        )
    return rows


PLOT_KINDS = ("mse_vs_n", "fit_box", "time_box", "iter_box")


def emit_plot_data(records, kind: str, path) -> Path:
    """Write plotting-ready CSV; ``mse_vs_n`` gives means, the ``*_box`` kinds quartiles."""
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    attr = {"mse_vs_n": "mse_dynamic", "fit_box": "fit", "time_box": "wall_time_seconds", "iter_box": "gn_iterations"}[kind]
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for r in records:
        key = (r.n, r.estimator)
        if key not in groups:
            groups[key] = []
            order.append(key)
        v = getattr(r, attr)
        if v is not None and math.isfinite(v):
            groups[key].append(float(v))
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if kind == "mse_vs_n":
            w.writerow(["x", "series", "value", "count"])
            for key in order:
                vals = groups[key]
                w.writerow([key[0], key[1], repr(float(np.mean(vals))) if vals else "", len(vals)])
        else:
            w.writerow(["x", "series", "value", "q1", "q3", "min", "max", "count"])
            for key in order:
                vals = groups[key]
                if not vals:
                    continue  # e.g. iter_box for estimators without GN
                q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
                w.writerow([key[0], key[1], *(repr(float(v)) for v in (med, q1, q3, min(vals), max(vals))), len(vals)])
    return path


def write_outputs(config: ExperimentConfig, records, summary) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "runs.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunRecord.CSV_FIELDS)
        for r in records:
            w.writerow(r.csv_row())
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_FIELDS)
        w.writeheader()
        for row in summary:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    for kind in PLOT_KINDS:
        if kind == "iter_box" and not any(r.gn_iterations is not None for r in records):
            continue
        emit_plot_data(records, kind, out / f"plotdata_{kind}.csv")
    (out / "config_echo.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return out
