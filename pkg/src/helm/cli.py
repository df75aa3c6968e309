"""Command-line entry point.

Subcommands: validate-hierarchy, gen-data, train, eval, gradcheck, report.
Exit codes: 0 ok, 1 I/O error, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from . import bundled_hierarchy_path
from .autodiff import NumericsError
from .checkpoint import load_params
from .data import (SyntheticSpec, generate_synthetic, load_dataset, save_dataset)
from .evaluation import evaluate
from .hierarchy import HierarchyError, build_edges, parse_hierarchy
from .metrics import average_ranks
from .runconfig import ConfigError, RunConfig, dump_config, load_config
from .training import Trainer, fit

RATIOS = (0.01, 0.05, 0.1, 0.25, 1.0)
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


def _read_hierarchy(ref: str):
    path = ref
    if not os.path.exists(path) and ref in ("ucm", "toy"):
        path = bundled_hierarchy_path(ref)
    with open(path) as f:
        return parse_hierarchy(f.read())


def cmd_validate_hierarchy(args) -> int:
    try:
        h = _read_hierarchy(args.path)
    except HierarchyError as e:
        print(json.dumps({"valid": False, "errors": [str(e)]}))
        return EXIT_INVALID
    edges = build_edges(h, add_reverse=False, add_self_loops=False)
    print(json.dumps({
        "valid": True,
        "M": h.num_labels,
        "levels": list(h.level_sizes),
        "leaves": len(h.leaf_ids),
        "edges": len(edges),
    }))
    return EXIT_OK


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    import dataclasses

    train = cfg.train
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.variant is not None:
        updates["variant"] = args.variant
    if args.ratio is not None:
        updates["ratio"] = args.ratio
    if updates:
        train = dataclasses.replace(train, **updates)
    out = args.out if args.out is not None else cfg.out
    return dataclasses.replace(cfg, train=train, out=out)


def _materialize_data(cfg: RunConfig, hierarchy):
    d = cfg.data
    if d.source == "synthetic":
        spec = SyntheticSpec(hierarchy, image_size=d.image_size, channels=d.channels,
                             leaves_per_sample=d.leaves_per_sample, noise_std=d.noise_std)
        train = generate_synthetic(spec, d.n_train, seed=d.data_seed)
        test = generate_synthetic(spec, d.n_test, seed=d.data_seed + 1)
        return train, test
    train = load_dataset(d.train_manifest, hierarchy)
    test = load_dataset(d.test_manifest, hierarchy)
    return train, test


def cmd_gen_data(args) -> int:
    h = _read_hierarchy(args.hierarchy)
    spec = SyntheticSpec(h, image_size=args.image_size,
                         leaves_per_sample=(args.min_leaves, args.max_leaves),
                         noise_std=args.noise_std)
    ds = generate_synthetic(spec, args.n, seed=args.seed)
    save_dataset(ds, args.out, meta={"seed": args.seed, "noise_std": args.noise_std})
    print(json.dumps({"written": args.out, "n": args.n, "M": h.num_labels}))
    return EXIT_OK


def cmd_train(args) -> int:
    with open(args.config) as f:
        cfg = load_config(f.read())
    cfg = _apply_overrides(cfg, args)
    if cfg.out is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    hierarchy = _read_hierarchy(cfg.hierarchy)
    train_set, _ = _materialize_data(cfg, hierarchy)
    os.makedirs(cfg.out, exist_ok=True)
    snapshot = os.path.join(cfg.out, "config_resolved.yaml")
    with open(snapshot + ".tmp", "w") as f:
        f.write(dump_config(cfg))
    os.replace(snapshot + ".tmp", snapshot)
    result = fit(train_set, cfg.train, out_dir=cfg.out)
    last = result.epoch_log[-1] if result.epoch_log else {}
    print(json.dumps({"out": cfg.out, "steps": result.total_steps,
                      "final": {k: last.get(k) for k in ("epoch", "L", "lr")},
                      "params": result.param_counts}))
    return EXIT_OK


def _trainer_from_run(run_dir: str, hierarchy):
    with open(os.path.join(run_dir, "config_resolved.yaml")) as f:
        cfg = load_config(f.read())
    trainer = Trainer(cfg.train, hierarchy)
    state = load_params(os.path.join(run_dir, "checkpoint.bin"))
    trainer.store.load_state(state)
    return cfg, trainer


def cmd_eval(args) -> int:
    run_dir = args.run
    with open(os.path.join(run_dir, "config_resolved.yaml")) as f:
        run_cfg = load_config(f.read())
    hierarchy = _read_hierarchy(args.hierarchy or run_cfg.hierarchy)
    _, trainer = _trainer_from_run(run_dir, hierarchy)
    if args.data:
        test_set = load_dataset(args.data, hierarchy)
    else:
        _, test_set = _materialize_data(run_cfg, hierarchy)
    record = evaluate(trainer, test_set)
    embeddings = record.pop("embeddings")
    out_path = args.out or os.path.join(run_dir, "metrics.json")
    with open(out_path + ".tmp", "w") as f:
        json.dump(record, f, indent=2)
    os.replace(out_path + ".tmp", out_path)
    if args.dump_embeddings:
        emb_path = os.path.join(run_dir, "embeddings.csv")
        with open(emb_path + ".tmp", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id"] + [f"f{i}" for i in range(embeddings.shape[1])])
            for i, row in enumerate(embeddings):
                writer.writerow([i] + [f"{v:.8g}" for v in row])
        os.replace(emb_path + ".tmp", emb_path)
    print(json.dumps(record))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import composite_gradcheck

    report = composite_gradcheck(eps=args.eps)
    print(json.dumps(report))
    if report["max_rel_error"] > args.tolerance:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args) -> int:
    run_dirs = sorted(d for d in glob.glob(args.runs) if os.path.isdir(d))
    records = []
    for d in run_dirs:
        path = os.path.join(d, "metrics.json")
        if os.path.exists(path):
            with open(path) as f:
                records.append(json.load(f))
    if not records:
        print("no completed runs with metrics.json matched the glob", file=sys.stderr)
        return EXIT_INVALID

    os.makedirs(args.out, exist_ok=True)
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault((r["variant"], r["ratio"]), []).append(r)

    agg_rows = []
    for (variant, ratio), rs in sorted(groups.items()):
        for metric in ("auprc", "ranking_loss"):
            vals = np.array([r[metric] for r in rs], dtype=np.float64)
            agg_rows.append({
                "variant": variant, "ratio": ratio, "metric": metric,
                "mean": float(vals.mean()),
                "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                "n_runs": int(vals.size),
            })
    agg_path = os.path.join(args.out, "aggregate.csv")
    with open(agg_path + ".tmp", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["variant", "ratio", "metric", "mean", "std", "n_runs"])
        writer.writeheader()
        writer.writerows(agg_rows)
    os.replace(agg_path + ".tmp", agg_path)

    # learning-curve data: one row per (ratio, variant) per metric
    curve_path = os.path.join(args.out, "curves.csv")
    with open(curve_path + ".tmp", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "ratio", "variant", "mean", "std"])
        for row in agg_rows:
            writer.writerow([row["metric"], row["ratio"], row["variant"],
                             f"{row['mean']:.6f}", f"{row['std']:.6f}"])
    os.replace(curve_path + ".tmp", curve_path)

    # average ranks across (ratio) settings, when every variant covers them
    rank_rows = []
    for metric, higher in (("auprc", True), ("ranking_loss", False)):
        table: dict[str, dict[str, float]] = {}
        for row in agg_rows:
            if row["metric"] == metric:
                table.setdefault(row["variant"], {})[str(row["ratio"])] = row["mean"]
        settings = {s for v in table.values() for s in v}
        if table and all(set(v) == settings for v in table.values()) and len(table) > 1:
            for variant, rank in sorted(average_ranks(table, higher_better=higher).items()):
                rank_rows.append({"metric": metric, "variant": variant, "avg_rank": rank})
    rank_path = os.path.join(args.out, "ranks.csv")
    with open(rank_path + ".tmp", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["metric", "variant", "avg_rank"])
        writer.writeheader()
        writer.writerows(rank_rows)
    os.replace(rank_path + ".tmp", rank_path)

    print(json.dumps({"runs": len(records), "groups": len(groups), "out": args.out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate-hierarchy", help="parse a hierarchy YAML and print a summary")
    v.add_argument("path")
    v.set_defaults(fn=cmd_validate_hierarchy)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    g.add_argument("--hierarchy", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--image-size", type=int, default=32)
    g.add_argument("--min-leaves", type=int, default=1)
    g.add_argument("--max-leaves", type=int, default=3)
    g.add_argument("--noise-std", type=float, default=0.05)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model from a YAML run config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--variant", choices=sorted(("mlc", "hmlc", "helm-g", "helm-b", "helm")))
    t.add_argument("--ratio", type=float, choices=RATIOS)
    t.add_argument("--out")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained run on a test set")
    e.add_argument("--run", required=True, help="run directory from train")
    e.add_argument("--data", help="dataset directory or manifest (default: config's test set)")
    e.add_argument("--hierarchy")
    e.add_argument("--out")
    e.add_argument("--dump-embeddings", action="store_true")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of all loss branches")
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--tolerance", type=float, default=1e-3)
    c.set_defaults(fn=cmd_gradcheck)

    r = sub.add_parser("report", help="aggregate metrics across runs")
    r.add_argument("runs", help="glob of run directories")
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (HierarchyError, ConfigError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericsError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
