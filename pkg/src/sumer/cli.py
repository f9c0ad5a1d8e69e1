"""Command-line front end: `sumer gen | run | compare | ingest`.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .data import Dataset, class_summary
from .engine import Trace, run_experiment
from .errors import SumerError, ValidationError
from .synth import GaussianSpec, MoonsSpec, gen_two_gaussians, gen_two_moons

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


def _parse_vector(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"bad vector {text!r} (want comma floats)") from None


def _parse_matrix(text, d):
    vals = _parse_vector(text)
    if len(vals) != d * d:
        raise ValidationError(f"covariance needs {d * d} values, got {len(vals)}")
    return np.asarray(vals).reshape(d, d)


def cmd_gen(args):
    if args.generator == "two-moons":
        ds = gen_two_moons(MoonsSpec(n=args.n, noise_std=args.noise_std,
                                     seed=args.seed))
    else:
        mean0, mean1 = _parse_vector(args.mean0), _parse_vector(args.mean1)
        d = len(mean0)
        spec = GaussianSpec(means=(mean0, mean1),
                            covariances=(_parse_matrix(args.cov0, d),
                                         _parse_matrix(args.cov1, d)),
                            counts=(args.n0, args.n1))
        ds = gen_two_gaussians(spec, args.seed)
    ds.to_csv(args.out)
    summary = class_summary(ds)
    print(f"wrote {len(ds)} rows (d={ds.dim}) to {args.out}")
    print(f"provided labels per class: {summary['provided']}")
    return EXIT_OK


def cmd_run(args):
    doc = cfgmod.load_toml(args.config)
    dataset_table, engine_cfg = cfgmod.parse_config(doc, args.config)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    stage = "dataset construction"
    try:
        dataset = cfgmod.build_dataset(dataset_table, engine_cfg.seed)
        stage = "experiment execution"
        trace = run_experiment(dataset, engine_cfg,
                               provenance={"config": doc,
                                           "config_path": os.path.abspath(args.config),
                                           "seed": engine_cfg.seed})
        stage = "artifact writing"
        base = os.path.splitext(os.path.basename(args.config))[0]
        csv_path = os.path.join(out_dir, f"{base}_trace.csv")
        json_path = os.path.join(out_dir, f"{base}_trace.json")
        trace.to_csv(csv_path)
        trace.to_json(json_path)
    except ValidationError:
        raise
    except Exception as exc:
        raise SumerError(f"failure during {stage}: {exc}") from exc
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def _trace_summary(path):
    rows = Trace.read_csv(path)
    strategies = []
    for r in rows:
        if r["strategy"] not in strategies:
            strategies.append(r["strategy"])
    finals = {s: [r for r in rows if r["strategy"] == s][-1] for s in strategies}
    static_acc = float(finals["static"]["holdout_acc"]) if "static" in finals \
        else None
    out = []
    for s in strategies:
        acc = float(finals[s]["holdout_acc"])
        out.append({"trace": path, "strategy": s, "final_acc": acc,
                    "delta_vs_static": (acc - static_acc)
                    if static_acc is not None else 0.0,
                    "coupled": finals[s]["coupled"] == "true"})
    return out


def cmd_compare(args):
    summaries = []
    for path in args.traces:
        summaries.extend(_trace_summary(path))
    if args.json:
        print(json.dumps(summaries, indent=2))
        return EXIT_OK
    hdr = f"{'trace':<32} {'strategy':<18} {'final_acc':>9} {'d_static':>9} {'coupled':>8}"
    print(hdr)
    print("-" * len(hdr))
    for s in summaries:
        print(f"{os.path.basename(s['trace']):<32} {s['strategy']:<18} "
              f"{s['final_acc']:>9.4f} {s['delta_vs_static']:>+9.4f} "
              f"{str(s['coupled']).lower():>8}")
    return EXIT_OK


def cmd_ingest(args):
    ds = Dataset.from_csv(args.csv)
    summary = class_summary(ds)
    print(f"{args.csv}: {len(ds)} instances, d={ds.dim}, "
          f"classes={ds.num_classes}")
    print(f"provided labels per class: {summary['provided']}")
    print(f"unlabeled: {summary['unlabeled']}")
    if args.normalized_out:
        ds.to_csv(args.normalized_out)
        print(f"wrote normalized copy to {args.normalized_out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sumer",
                                description="Self-updating model experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    gg = g.add_subparsers(dest="generator", required=True)
    m = gg.add_parser("two-moons")
    m.add_argument("--n", type=int, default=1000)
    m.add_argument("--noise-std", type=float, default=0.1)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_gen)
    tg = gg.add_parser("two-gaussians")
    tg.add_argument("--mean0", default="-2,0")
    tg.add_argument("--mean1", default="2,0")
    tg.add_argument("--cov0", default="1,0,0,1",
                    help="row-major flattened covariance")
    tg.add_argument("--cov1", default="1,0,0,1")
    tg.add_argument("--n0", type=int, default=500)
    tg.add_argument("--n1", type=int, default=500)
    tg.add_argument("--seed", type=int, default=0)
    tg.add_argument("--out", required=True)
    tg.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="summarize trace CSVs")
    c.add_argument("traces", nargs="+")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_compare)

    i = sub.add_parser("ingest", help="validate an external dataset CSV")
    i.add_argument("csv")
    i.add_argument("--normalized-out", default=None)
    i.set_defaults(func=cmd_ingest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SumerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
