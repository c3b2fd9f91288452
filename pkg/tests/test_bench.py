import csv
import math

import numpy as np
import pytest

from bjsd import bench
from bjsd.bench import ExperimentConfig, emit_plot_data, fit_metric, mse_dynamic, run_experiment
from bjsd.model import ThetaVector, sec51_model


def small(**kw):
    base = dict(experiment="sec51_open", n_list=[300, 600], runs=3, order_mode="fixed:20", estimators=["sd", "sdgn"])
    base.update(kw)
    return ExperimentConfig(**base)


def test_fit_metric_examples():
    t0 = sec51_model().theta
    assert fit_metric(t0, t0) == 100.0
    mean = np.full(6, t0.flat.mean())
    assert fit_metric(mean, t0) == pytest.approx(0.0, abs=1e-12)
    assert fit_metric(2 * t0.flat - mean, t0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_metric(np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        fit_metric(np.ones(2), t0)


def test_mse_dynamic_examples():
    t0 = sec51_model().theta
    assert mse_dynamic(t0, t0) == 0.0
    b = t0.b.copy()
    b[0] += 0.3
    moved = ThetaVector(b, t0.c + 5, t0.d, t0.f)  # noise-model errors are ignored
    assert mse_dynamic(moved, t0) == pytest.approx(0.09)


def test_config_validation_and_defaults():
    cfg = ExperimentConfig("sec52_oscillatory")
    assert cfg.n_list == [2500, 5000, 10000, 20000] and cfg.snr == 3.0 and cfg.order_mode == "aic"
    assert ExperimentConfig("sec53_random").snr == 5.0
    with pytest.raises(ValueError):
        small(n_list=[600, 300])
    with pytest.raises(ValueError):
        small(runs=0)
    with pytest.raises(ValueError):
        small(estimators=[])
    with pytest.raises(ValueError):
        small(estimators=["wnsf"])
    with pytest.raises(ValueError):
        small(order_mode="magic")
    with pytest.raises(ValueError):
        ExperimentConfig("sec99")
    assert ExperimentConfig.from_dict(small().to_dict()) == small()


def test_parse_order_mode():
    assert bench.parse_order_mode("fixed:50") == ("fixed", 50)
    assert bench.parse_order_mode("aic") == ("aic", tuple(range(10, 151, 10)))
    assert bench.parse_order_mode("aic:5,7") == ("aic", (5, 7))
    assert bench.parse_order_mode("rec") == ("rec", None)


def test_single_run_single_estimator():
    recs, summary = run_experiment(small(runs=1, n_list=[300], estimators=["sd"]))
    assert len(recs) == 1 and len(summary) == 1
    again, _ = run_experiment(small(runs=1, n_list=[300], estimators=["sd"]))
    assert recs[0].theta == again[0].theta


def test_seed_and_prefix_semantics():
    cfg = small(runs=2, estimators=["sd"])
    recs, _ = run_experiment(cfg)
    assert [r.seed for r in recs if r.n == 300] == [0, 1]
    full = bench.generate_realization(cfg, 1)
    assert full.n == 600 and full.seed == 1


def test_recommended_order_mode():
    recs, _ = run_experiment(small(runs=1, n_list=[10000], order_mode="rec", estimators=["sd"]))
    assert recs[0].m == 32


def test_all_estimators_and_flags():
    recs, summary = run_experiment(small(runs=2, estimators=list(bench.ESTIMATORS)))
    assert {r.estimator for r in recs} == set(bench.ESTIMATORS)
    for r in recs:
        assert (r.gn_iterations is None) == (r.estimator == "sd")
        assert math.isfinite(r.fit)
    labels = {row["estimator"]: row["label"] for row in summary}
    assert labels["pem_default"] == "pem_default(approx)"


def test_failures_are_flagged_rows():
    recs, summary = run_experiment(small(runs=2, n_list=[300], order_mode="fixed:200"))
    assert len(recs) == 4
    assert all(r.failed and r.flags and r.flags[0].startswith("error:") for r in recs)
    assert all(row["failures"] == 2 and math.isnan(row["mean_fit"]) for row in summary)


def test_parallel_equals_serial():
    a, _ = run_experiment(small(jobs=1))
    b, _ = run_experiment(small(jobs=2))
    assert [r.csv_row()[:-1] for r in a] == [r.csv_row()[:-1] for r in b]


def test_outputs_and_summary_consistency(tmp_path):
    cfg = small(output_dir=str(tmp_path / "out"))
    recs, summary = run_experiment(cfg)
    out = bench.write_outputs(cfg, recs, summary)
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "config_echo.json",
        "plotdata_fit_box.csv",
        "plotdata_iter_box.csv",
        "plotdata_mse_vs_n.csv",
        "plotdata_time_box.csv",
        "runs.csv",
        "summary.csv",
    ]
    with (out / "runs.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    with (out / "summary.csv").open() as fh:
        summ = list(csv.DictReader(fh))
    for s in summ:
        fits = [float(r["fit"]) for r in rows if r["n"] == s["n"] and r["estimator"] == s["estimator"]]
        assert abs(np.mean(fits) - float(s["mean_fit"])) < 1e-12
        assert abs(np.median(fits) - float(s["median_fit"])) < 1e-12


def sort_quantile(vals, q):
    v = sorted(vals)
    pos = q * (len(v) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (pos - lo) * (v[hi] - v[lo])


def test_plot_data(tmp_path):
    recs, _ = run_experiment(small(runs=5))
    path = emit_plot_data(recs, "fit_box", tmp_path / "fit.csv")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        fits = [r.fit for r in recs if r.n == int(row["x"]) and r.estimator == row["series"]]
        assert float(row["value"]) == pytest.approx(sort_quantile(fits, 0.5), abs=1e-12)
        assert float(row["q1"]) == pytest.approx(sort_quantile(fits, 0.25), abs=1e-12)
        assert float(row["q3"]) == pytest.approx(sort_quantile(fits, 0.75), abs=1e-12)
    mse = emit_plot_data(recs, "mse_vs_n", tmp_path / "mse.csv")
    with mse.open() as fh:
        keys = [(r["x"], r["series"]) for r in csv.DictReader(fh)]
    assert len(keys) == len(set(keys)) == 4
    with pytest.raises(ValueError):
        emit_plot_data([], "fit_box", tmp_path / "x.csv")
    with pytest.raises(ValueError):
        emit_plot_data(recs, "violin", tmp_path / "x.csv")
