"""Command line entry point: ``bjsd simulate|estimate|benchmark|crbound``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .model import ThetaVector, sec51_model
from .pem import cramer_rao, gn_refine
from .poly import Polynomial, RationalFilter
from .sd import sd_estimate
from .signals import ClosedLoopSpec, Dataset, InputSpec


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _orders(text):
    vals = _int_list(text)
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("orders must be four integers pb,pc,pd,pf")
    return tuple(vals)


def _build_config(args) -> bench.ExperimentConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    overrides = {
        "experiment": args.experiment,
        "n_list": args.n,
        "runs": args.runs,
        "base_seed": args.seed,
        "order_mode": args.order,
        "estimators": args.estimators,
        "snr": args.snr,
        "output_dir": args.out,
        "jobs": args.jobs,
    }
    d.update({k: v for k, v in overrides.items() if v is not None})
    if "experiment" not in d:
        raise SystemExit("error: --experiment or a config file naming one is required")
    return bench.ExperimentConfig.from_dict(d)


def cmd_simulate(args):
    cfg = _build_config(args)
    if args.n is not None:
        cfg.n_list = [max(args.n)]
    data = bench.generate_realization(cfg, 0)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = data.to_csv(out / "data.csv")
    print(path)


def _load_init(spec, data, orders, u, y, m):
    if spec == "true":
        if data.truth is None:
            raise SystemExit("error: --init true needs a dataset with a model sidecar")
        return data.truth.theta
    if spec == "sd":
        return sd_estimate(u, y, orders, m).theta
    raw = json.loads(Path(spec).read_text())
    if isinstance(raw, dict):
        return ThetaVector.from_dict(raw)
    return ThetaVector.from_flat(raw, orders)


def cmd_estimate(args):
    data = Dataset.from_csv(args.data)
    if args.orders is not None:
        orders = args.orders
    elif data.truth is not None:
        orders = data.truth.orders
    else:
        raise SystemExit("error: --orders is required when the dataset has no model sidecar")
    u, y = data.u, data.y
    mode = args.order or "aic"
    if mode == "rec" and data.truth is None:
        raise SystemExit("error: --order rec needs the true model in the dataset sidecar")
    m = bench.select_order(mode, u, y, data.truth)
    gn_kw = {"max_iter": args.max_iter, "tol": args.tol, "criterion": args.criterion}
    if args.method == "sd":
        result = sd_estimate(u, y, orders, m).to_dict()
    elif args.method == "sdgn":
        result = gn_refine(sd_estimate(u, y, orders, m).theta, u, y, **gn_kw).to_dict()
    else:
        init = _load_init(args.init, data, orders, u, y, m)
        result = gn_refine(init, u, y, **gn_kw).to_dict()
    result["m"] = m
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def cmd_benchmark(args):
    cfg = _build_config(args)
    records, summary = bench.run_experiment(cfg)
    out = bench.write_outputs(cfg, records, summary)
    for row in summary:
        print(
            f"n={row['n']:>6} {row['estimator']:<12} fit={row['mean_fit']:8.2f} "
            f"median={row['median_fit']:8.2f} failures={row['failures']}"
        )
    print(out)


def cmd_crbound(args):
    model = sec51_model()
    if args.experiment == "sec51_closed":
        spec = ClosedLoopSpec(RationalFilter(Polynomial([1.0]), Polynomial([1.0])), 1.0)
    else:
        spec = InputSpec("sensitivity")
    pb, pc, pd, pf = model.orders
    rows = []
    for n in args.n or [300, 600, 1000, 3000, 6000, 10000]:
        cov = cramer_rao(model, spec, n, args.runs or 20, args.seed or 0)
        idx = np.r_[0:pb, pb + pc + pd : pb + pc + pd + pf]
        rows.append({"n": n, "trace_fb": float(np.trace(cov[np.ix_(idx, idx)])) / n})
    text = json.dumps(rows, indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "crbound.json").write_text(text + "\n")
    print(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bjsd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, experiments=bench.EXPERIMENTS):
        sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
        sp.add_argument("--experiment", choices=experiments)
        sp.add_argument("--n", type=_int_list, help="comma separated sample sizes")
        sp.add_argument("--runs", type=int)
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--out", help="output directory")

    s = sub.add_parser("simulate", help="write one seeded dataset as CSV")
    common(s)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="Monte Carlo sweep with CSV outputs")
    common(b)
    b.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("crbound", help="Cramer-Rao trace for the dynamics block")
    common(c, ("sec51_open", "sec51_closed"))
    c.set_defaults(func=cmd_crbound, experiment="sec51_open")

    for sp in (s, b):
        sp.add_argument("--order", help="fixed:K, aic[:m1,m2,..|full] or rec")
        sp.add_argument("--estimators", type=lambda t: t.split(","), help="subset of " + ",".join(bench.ESTIMATORS))
        sp.add_argument("--snr", type=float)
        sp.add_argument("--jobs", type=int)

    e = sub.add_parser("estimate", help="fit one dataset")
    e.add_argument("--data", required=True, help="CSV with t,u,y columns")
    e.add_argument("--orders", type=_orders, help="pb,pc,pd,pf (default: from sidecar)")
    e.add_argument("--method", choices=("sd", "sdgn", "pem"), default="sd")
    e.add_argument("--init", default="sd", help="sd, true, or a JSON value file (PEM only)")
    e.add_argument("--order", help="fixed:K, aic[:m1,m2,..|full] or rec")
    e.add_argument("--max-iter", type=int, default=bench.BENCH_GN["max_iter"])
    e.add_argument("--tol", type=float, default=bench.BENCH_GN["tol"])
    e.add_argument("--criterion", choices=("improvement", "step"), default=bench.BENCH_GN["criterion"])
    e.add_argument("--out", help="write JSON here instead of stdout")
    e.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
