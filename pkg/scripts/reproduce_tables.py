#!/usr/bin/env python3
"""Retrain the reference classifiers and print the evaluation tables.

For every dataset CSV found in the data directory this trains a
logistic regression, the default relu network and a smooth tanh
network, then prints and saves four tables:

  accuracy.csv          test accuracy and F1 per classifier
  fidelity_linear.csv   per-method mean Spearman vs the LR weights
  fidelity_network.csv  per-method mean Spearman vs the tanh network's
                        gradients (relu gradients are partly dead, so
                        the smooth variant is the gradient reference)
  runtime.csv           mean milliseconds per explanation; only the
                        ordering is meaningful across machines

wdbc.csv is exported on demand; pima.csv and banknote.csv must already
be in the data directory (see README for the expected headers).
"""
import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from faithprobe.attribution import (
    LimeConfig,
    ShapConfig,
    SiloConfig,
    fit_random_forest,
    gradient_scores,
    kernel_shap_scores,
    lime_scores,
    silo_scores,
    subsample_background,
)
from faithprobe.classifiers import TrainConfig, train_logistic_regression, train_mlp
from faithprobe.evaluate import (
    ResultTable,
    classification_metrics,
    fidelity_vs_reference,
    runtime_bench,
)
from faithprobe.ingest import SplitSpec, load_csv, split_and_standardize

from export_wdbc import write_wdbc

DATASETS = ("pima", "banknote", "wdbc")
SMOOTH_CFG = TrainConfig(max_iterations=1000, learning_rate=0.01, l2_strength=1.0,
                         tolerance=1e-4, seed=0)


def method_scorer(method, model, train, seed):
    """Closure (x, i) -> score vector for one attribution method."""
    label = model.label_order[1]
    if method == "grad":
        return lambda x, i: gradient_scores(model, x, label).scores
    if method == "lime":
        cfg = LimeConfig(seed=seed)
        return lambda x, i: lime_scores(model, x, label, cfg,
                                        np.random.default_rng([seed, i])).scores
    if method == "silo":
        cfg = SiloConfig(seed=seed)
        forest = fit_random_forest(train, cfg)
        return lambda x, i: silo_scores(model, x, label, forest, train, cfg).scores
    if method == "shap":
        cfg = ShapConfig(subsample_background(train, 100, seed), None, seed)
        return lambda x, i: kernel_shap_scores(model, x, label, cfg,
                                               np.random.default_rng([seed, i])).scores
    raise ValueError(method)


def fidelity(reference, model, train, test, method, seeds):
    per_seed = []
    skipped = 0
    for seed in seeds:
        scorer = method_scorer(method, model, train, seed)
        result = fidelity_vs_reference(
            reference, [scorer(test.instance(i), i) for i in range(test.num_examples)])
        per_seed.append(result.mean_rho)
        skipped = max(skipped, result.num_skipped)
    return float(np.mean(per_seed)), skipped


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--data-dir", default=os.environ.get("FAITHPROBE_DATA", "data"))
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--seeds", default="0,1,2",
                        help="seeds averaged over for the stochastic explainers")
    parser.add_argument("--bench-instances", type=int, default=10)
    parser.add_argument("--skip-shap", action="store_true",
                        help="skip the sampled kernel explainer (the slow one)")
    args = parser.parse_args()
    data_dir = Path(args.data_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    methods = ["grad", "silo", "lime"] + ([] if args.skip_shap else ["shap"])

    accuracy_rows = []
    fid_linear = ResultTable(".3f")
    fid_network = ResultTable(".3f")
    runtime = ResultTable(".2f")

    for name in DATASETS:
        path = data_dir / f"{name}.csv"
        if not path.exists() and name == "wdbc":
            try:
                write_wdbc(path)
            except ImportError:
                pass
        if not path.exists():
            print(f"skipping {name}: {path} not found", file=sys.stderr)
            continue
        print(f"== {name} ==", file=sys.stderr)
        problem = load_csv(str(path))
        train, test, _ = split_and_standardize(problem, SplitSpec())
        lr = train_logistic_regression(train)
        mlp = train_mlp(train)
        smooth = train_mlp(train, cfg=SMOOTH_CFG, hidden_activation="tanh")
        for kind, model in (("lr", lr), ("mlp", mlp), ("mlp_tanh", smooth)):
            acc, f1 = classification_metrics(model, test)
            accuracy_rows.append((name, kind, acc, f1))

        lr_reference = [lr.weights for _ in range(test.num_examples)]
        label = smooth.label_order[1]
        net_reference = [gradient_scores(smooth, test.instance(i), label).scores
                         for i in range(test.num_examples)]
        for method in methods:
            method_seeds = [0] if method in ("grad", "silo") else seeds
            rho, _ = fidelity(lr_reference, lr, train, test, method, method_seeds)
            fid_linear.set(name, method, rho)
            rho, _ = fidelity(net_reference, smooth, train, test, method, method_seeds)
            fid_network.set(name, method, rho)

        instances = [test.instance(i) for i in range(min(args.bench_instances,
                                                         test.num_examples))]
        for method in methods:
            scorer = method_scorer(method, mlp, train, 0)
            runtime.set(name, method, runtime_bench(lambda x: scorer(x, 0), instances, 3))

    if not accuracy_rows:
        print("no datasets found; nothing to do", file=sys.stderr)
        return 1

    with (out_dir / "accuracy.csv").open("w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "classifier", "accuracy", "f1"])
        for row in accuracy_rows:
            writer.writerow([row[0], row[1], f"{row[2]:.3f}", f"{row[3]:.3f}"])
    print("\naccuracy")
    for row in accuracy_rows:
        print(f"  {row[0]:<10} {row[1]:<9} acc={row[2]:.3f} f1={row[3]:.3f}")

    for title, table, fname in (("fidelity vs linear weights", fid_linear, "fidelity_linear.csv"),
                                ("fidelity vs network gradients", fid_network, "fidelity_network.csv"),
                                ("runtime (ms per explanation)", runtime, "runtime.csv")):
        with (out_dir / fname).open("w", encoding="utf-8") as fh:
            table.write_csv(fh)
        print(f"\n{title}")
        print(table.to_markdown())
    return 0


if __name__ == "__main__":
    sys.exit(main())
