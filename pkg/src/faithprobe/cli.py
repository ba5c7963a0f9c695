"""Command line front end.

Subcommands: train, explain, audit, compare, bench. Flags use the
--key=value form. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure. Outputs are reproducible: the same flags and seed
produce byte-identical CSVs, timing tables excepted, and every output
starts with a comment line recording tool version, seed and a hash of
the run configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import AttributionScores, DataError, NumericalError
from .classifiers import TrainConfig, train_logistic_regression, train_mlp, LogisticRegressionModel
from .attribution import (
    EXACT,
    LimeConfig,
    ShapConfig,
    SiloConfig,
    fit_random_forest,
    gradient_scores,
    kernel_shap_scores,
    lime_scores,
    silo_scores,
    subsample_background,
    write_score_table,
    METHOD_ORDER,
)
from .faithfulness import (
    VIOLATED,
    ZERO_SCORE_UNTESTED,
    error_decay,
    error_dominance,
    qualitative_probe,
    sign_agreement,
    strong_probe,
    write_probe_report,
)
from .evaluate import ResultTable, classification_metrics, fidelity_vs_reference, runtime_bench
from .ingest import SplitSpec, TrainedBundle, load_bundle, load_csv, save_bundle, split_and_standardize

OUTPUT_DIR_ENV = "FAITHPROBE_OUT"
AUDIT_METHODS = (*METHOD_ORDER, "flipped-grad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code map."""

    def error(self, message):
        raise UsageError(message)


def _output_dir(args) -> Path:
    if getattr(args, "out_dir", None):
        path = Path(args.out_dir)
    else:
        path = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_hash(args) -> str:
    """Hash of everything that influences output content.

    Output locations and the worker count are excluded so they can vary
    without perturbing result bytes.
    """
    skip = {"func", "out", "out_dir", "workers"}
    payload = {k: v for k, v in sorted(vars(args).items()) if k not in skip and not callable(v)}
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def _header_comment(args) -> str:
    return f"faithprobe {__version__} seed={getattr(args, 'seed', 0)} config={_config_hash(args)}"


def _split_spec(args) -> SplitSpec:
    return SplitSpec(test_fraction=args.test_fraction, seed=args.split_seed,
                     shuffle=not args.no_shuffle)


def _load_splits(args, bundle: TrainedBundle):
    """Recreate the bundle's split on a dataset file and re-standardize
    with the bundle's own statistics."""
    problem = load_csv(args.dataset, args.label_column)
    if problem.feature_names != bundle.feature_names:
        raise DataError("dataset features do not match the model's feature names")
    train, test, _ = split_and_standardize(problem, bundle.split)
    # the split reproduces the training-time rows, so the train statistics
    # in the bundle equal the recomputed ones; use the stored ones anyway
    return train, test


def cmd_train(args) -> int:
    problem = load_csv(args.dataset, args.label_column)
    split = _split_spec(args)
    train, test, stats = split_and_standardize(problem, split)

    if args.classifier == "lr":
        cfg = TrainConfig(
            max_iterations=args.max_iter if args.max_iter is not None else 500,
            learning_rate=args.learning_rate if args.learning_rate is not None else 1.0,
            l2_strength=args.l2 if args.l2 is not None else 1.0,
            seed=args.seed,
            tolerance=args.tolerance if args.tolerance is not None else 1e-6,
        )
        model = train_logistic_regression(train, cfg)
    else:
        cfg = TrainConfig(
            max_iterations=args.max_iter if args.max_iter is not None else 1000,
            learning_rate=args.learning_rate if args.learning_rate is not None else 0.01,
            l2_strength=args.l2 if args.l2 is not None else 1e-4,
            seed=args.seed,
            tolerance=args.tolerance if args.tolerance is not None else 1e-4,
        )
        hidden = tuple(int(h) for h in args.hidden.split(",") if h != "")
        model = train_mlp(train, hidden, cfg, hidden_activation=args.activation)

    accuracy, f1 = classification_metrics(model, test)
    out_path = Path(args.out) if args.out else _output_dir(args) / "model.json"
    save_bundle(out_path, TrainedBundle(model, problem.feature_names, stats, split))
    print(f"# {_header_comment(args)}")
    print(f"test_accuracy={accuracy:.3f} test_f1={f1:.3f} model={out_path}")
    return 0


def _parse_methods(raw: str, allowed=METHOD_ORDER) -> list[str]:
    methods = [m.strip() for m in raw.split(",") if m.strip()]
    if not methods:
        raise UsageError("no methods requested")
    for m in methods:
        if m not in allowed:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(allowed)}")
    return methods


def _method_scorers(args, bundle, train, methods, seed: int):
    """Build per-method scoring closures over the train split."""
    model = bundle.model
    scorers = {}
    if "grad" in methods or "flipped-grad" in methods:
        scorers["grad"] = lambda x, label, idx: gradient_scores(model, x, label)
    if "flipped-grad" in methods:
        def flipped(x, label, idx):
            g = gradient_scores(model, x, label)
            return AttributionScores(-g.scores, label, x)
        scorers["flipped-grad"] = flipped
    if "lime" in methods:
        lime_cfg = LimeConfig(num_samples=args.lime_samples, seed=seed)
        scorers["lime"] = lambda x, label, idx: lime_scores(
            model, x, label, lime_cfg, np.random.default_rng([seed, idx]))
    if "silo" in methods:
        silo_cfg = SiloConfig(num_trees=args.silo_trees, seed=seed)
        forest = fit_random_forest(train, silo_cfg)
        scorers["silo"] = lambda x, label, idx: silo_scores(model, x, label, forest, train, silo_cfg)
    if "shap" in methods:
        background = subsample_background(train, args.shap_background, seed)
        mode = EXACT if args.shap_coalitions == "exact" else (
            None if args.shap_coalitions is None else int(args.shap_coalitions))
        shap_cfg = ShapConfig(background, mode, seed)
        scorers["shap"] = lambda x, label, idx: kernel_shap_scores(
            model, x, label, shap_cfg, np.random.default_rng([seed, idx]))
    return scorers


def cmd_explain(args) -> int:
    bundle = load_bundle(args.model)
    train, test = _load_splits(args, bundle)
    if not 0 <= args.instance < test.num_examples:
        raise DataError(
            f"instance index {args.instance} out of range; test split has {test.num_examples} rows"
        )
    x = test.instance(args.instance)
    label = args.label if args.label is not None else bundle.model.label_order[1]
    if label not in bundle.model.label_order:
        raise UsageError(f"label {label!r} not in {bundle.model.label_order}")

    methods = _parse_methods(args.methods)
    scorers = _method_scorers(args, bundle, train, methods, args.seed)
    scored = {m: scorers[m](x, label, args.instance) for m in methods}

    is_lr = isinstance(bundle.model, LogisticRegressionModel)
    if is_lr:
        sort_key = bundle.model.weights
        if label == bundle.model.label_order[0]:
            sort_key = -sort_key
    else:
        sort_key = gradient_scores(bundle.model, x, label).scores

    rows = []
    for i in np.argsort(sort_key, kind="stable"):
        row = {"feature_name": x.feature_names[i]}
        if is_lr:
            row["weight"] = float(sort_key[i])
        for m in methods:
            row[m] = float(scored[m].scores[i])
        rows.append(row)

    buffer = io.StringIO()
    buffer.write(f"# {_header_comment(args)}\n")
    write_score_table(buffer, rows, methods, include_weight=is_lr)
    if args.out:
        Path(args.out).write_text(buffer.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buffer.getvalue())
    return 0


def cmd_audit(args) -> int:
    bundle = load_bundle(args.model)
    train, test = _load_splits(args, bundle)
    methods = _parse_methods(args.method, AUDIT_METHODS)
    if len(methods) != 1:
        raise UsageError("audit checks exactly one method per run")
    method = methods[0]
    scorers = _method_scorers(args, bundle, train, [method], args.seed)
    scorer = scorers[method]
    model = bundle.model
    label = model.label_order[1]
    dataset_name = Path(args.dataset).stem

    limit = test.num_examples if args.max_instances is None else min(args.max_instances, test.num_examples)
    qual_rows, strong_rows, decay_rows, sign_rows, dom_rows = [], [], [], [], []
    tested = violated = 0
    strong_tested = strong_violated = 0
    decay_pass = decay_total = 0
    dom_pass = dom_total = 0
    sign_fractions = []

    for idx in range(limit):
        x = test.instance(idx)
        scores = scorer(x, label, idx)
        grad = gradient_scores(model, x, label)

        qual = qualitative_probe(model, scores, args.epsilon)
        for i, status in enumerate(qual.statuses):
            qual_rows.append({"dataset": dataset_name, "method": method, "instance_id": idx,
                              "feature": x.feature_names[i], "verdict": status,
                              "epsilon": args.epsilon, "ratio_sequence": ""})
            if status != ZERO_SCORE_UNTESTED:
                tested += 1
                violated += status == VIOLATED

        strong = strong_probe(model, scores, args.epsilon, args.strong_tolerance)
        for i, status in enumerate(strong.statuses):
            strong_rows.append({"dataset": dataset_name, "method": method, "instance_id": idx,
                                "feature": x.feature_names[i], "verdict": status,
                                "epsilon": args.epsilon, "ratio_sequence": ""})
            strong_tested += 1
            strong_violated += status == VIOLATED

        if np.any(scores.scores != 0.0):
            record = error_decay(model, scores, scores.scores, args.decay_step, args.decay_levels)
            decay_total += 1
            decay_pass += record.passed
            decay_rows.append({"dataset": dataset_name, "method": method, "instance_id": idx,
                               "feature": "all", "verdict": "PASS" if record.passed else "FAIL",
                               "epsilon": args.decay_step, "ratio_sequence": record.ratios})

        agreement = sign_agreement(scores, grad)
        sign_fractions.append(agreement.fraction)
        for i, ok in enumerate(agreement.per_feature):
            sign_rows.append({"dataset": dataset_name, "method": method, "instance_id": idx,
                              "feature": x.feature_names[i], "verdict": "AGREE" if ok else "DISAGREE",
                              "epsilon": 0.0, "ratio_sequence": ""})

        separation = scores.scores - grad.scores
        if float(np.linalg.norm(separation)) > 1e-9:
            record = error_dominance(model, grad, scores, separation, args.decay_step, args.decay_levels)
            dom_total += 1
            dom_pass += record.passed
            dom_rows.append({"dataset": dataset_name, "method": method, "instance_id": idx,
                             "feature": "all", "verdict": "PASS" if record.passed else "FAIL",
                             "epsilon": args.decay_step, "ratio_sequence": record.ratios})
        else:
            dom_rows.append({"dataset": dataset_name, "method": method, "instance_id": idx,
                             "feature": "all", "verdict": "NOT_APPLICABLE",
                             "epsilon": args.decay_step, "ratio_sequence": ""})

    out_dir = _output_dir(args)
    header = _header_comment(args)
    for name, rows in (("qualitative", qual_rows), ("strong", strong_rows),
                       ("decay", decay_rows), ("sign", sign_rows), ("dominance", dom_rows)):
        path = out_dir / f"audit_{method}_{name}.csv"
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"# {header}\n")
            write_probe_report(fh, rows)

    print(f"# {header}")
    print(f"instances={limit} method={method}")
    print(f"qualitative_violation_rate={violated / tested if tested else 0.0:.4f} tested={tested}")
    print(f"strong_violation_rate={strong_violated / strong_tested if strong_tested else 0.0:.4f}")
    print(f"decay_pass_rate={decay_pass / decay_total if decay_total else 0.0:.4f}")
    print(f"mean_sign_agreement={float(np.mean(sign_fractions)) if sign_fractions else 1.0:.4f}")
    print(f"dominance_pass_rate={dom_pass / dom_total if dom_total else 0.0:.4f} applicable={dom_total}")
    return 0


def cmd_compare(args) -> int:
    bundle = load_bundle(args.model)
    train, test = _load_splits(args, bundle)
    methods = _parse_methods(args.methods)
    model = bundle.model
    label = model.label_order[1]
    dataset_name = Path(args.dataset).stem
    seeds = [int(s) for s in str(args.seeds).split(",") if s != ""]
    if not seeds:
        raise UsageError("at least one seed is required")

    is_lr = isinstance(model, LogisticRegressionModel)
    if is_lr:
        reference = [model.weights for _ in range(test.num_examples)]
    else:
        reference = [gradient_scores(model, test.instance(i), label).scores
                     for i in range(test.num_examples)]

    fidelity = ResultTable(".3f")
    for method in methods:
        per_seed = []
        for seed in seeds:
            scorer = _method_scorers(args, bundle, train, [method], seed)[method]
            scored = [scorer(test.instance(i), label, i).scores for i in range(test.num_examples)]
            per_seed.append(fidelity_vs_reference(reference, scored).mean_rho)
        fidelity.set(dataset_name, method, float(np.mean(per_seed)))

    out_dir = _output_dir(args)
    with (out_dir / "fidelity.csv").open("w", encoding="utf-8") as fh:
        fidelity.write_csv(fh, _header_comment(args))
    print(fidelity.to_markdown())

    if not args.skip_runtime:
        runtime = _runtime_table(args, bundle, train, test, methods, dataset_name)
        with (out_dir / "runtime.csv").open("w", encoding="utf-8") as fh:
            runtime.write_csv(fh, _header_comment(args))
        print(runtime.to_markdown())
    return 0


def _runtime_table(args, bundle, train, test, methods, dataset_name) -> ResultTable:
    label = bundle.model.label_order[1]
    count = min(args.bench_instances, test.num_examples)
    instances = [test.instance(i) for i in range(count)]
    table = ResultTable(".2f")
    for method in methods:
        scorer = _method_scorers(args, bundle, train, [method], args.seed)[method]
        ms = runtime_bench(lambda x: scorer(x, label, 0), instances, args.repetitions)
        table.set(dataset_name, method, ms)
    return table


def cmd_bench(args) -> int:
    bundle = load_bundle(args.model)
    train, test = _load_splits(args, bundle)
    methods = _parse_methods(args.methods)
    table = _runtime_table(args, bundle, train, test, methods, Path(args.dataset).stem)
    out_dir = _output_dir(args)
    with (out_dir / "runtime.csv").open("w", encoding="utf-8") as fh:
        table.write_csv(fh, _header_comment(args))
    print(table.to_markdown())
    return 0


def _add_dataset_flags(p: _Parser) -> None:
    p.add_argument("--dataset", required=True, help="CSV dataset path")
    p.add_argument("--label-column", default=None, help="label column name; default: last column")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=42)
    p.add_argument("--no-shuffle", action="store_true")


def _add_common_flags(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=0, help="global seed for stochastic explainers")
    p.add_argument("--out-dir", default=None,
                   help=f"output directory; default ${OUTPUT_DIR_ENV} or the working directory")
    p.add_argument("--workers", type=int, default=os.cpu_count(),
                   help="maximum worker count; execution order stays deterministic")


def _add_explainer_flags(p: _Parser) -> None:
    p.add_argument("--lime-samples", type=int, default=5000)
    p.add_argument("--silo-trees", type=int, default=200)
    p.add_argument("--shap-background", type=int, default=100)
    p.add_argument("--shap-coalitions", default=None,
                   help="'exact', or a sample count; default: exact when k <= 15, else 2048")


def build_parser() -> _Parser:
    parser = _Parser(prog="faithprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a classifier and save it")
    _add_dataset_flags(p)
    _add_common_flags(p)
    p.add_argument("--classifier", choices=("lr", "mlp"), required=True)
    p.add_argument("--out", default=None, help="model file path")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--tolerance", type=float, default=None,
                   help="stopping tolerance (default 1e-6 for lr, 1e-4 for mlp)")
    p.add_argument("--hidden", default="8,8,8,8,8", help="comma-separated hidden layer widths")
    p.add_argument("--activation", choices=("relu", "tanh", "logistic"), default="relu")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="score one test instance")
    _add_dataset_flags(p)
    _add_common_flags(p)
    _add_explainer_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--instance", type=int, required=True, help="index into the test split")
    p.add_argument("--methods", default="grad,silo,lime,shap")
    p.add_argument("--label", default=None, help="label to explain; default: positive class")
    p.add_argument("--out", default=None, help="CSV path; default: stdout")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("audit", help="run faithfulness probes over the test split")
    _add_dataset_flags(p)
    _add_common_flags(p)
    _add_explainer_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--method", default="grad", help=f"one of {', '.join(AUDIT_METHODS)}")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--strong-tolerance", type=float, default=1e-9)
    p.add_argument("--decay-step", type=float, default=0.1)
    p.add_argument("--decay-levels", type=int, default=8)
    p.add_argument("--max-instances", type=int, default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("compare", help="fidelity and runtime tables for several methods")
    _add_dataset_flags(p)
    _add_common_flags(p)
    _add_explainer_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--methods", default="grad,silo,lime,shap")
    p.add_argument("--seeds", default="0", help="comma-separated seeds to average over")
    p.add_argument("--bench-instances", type=int, default=20)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--skip-runtime", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="runtime table only")
    _add_dataset_flags(p)
    _add_common_flags(p)
    _add_explainer_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--methods", default="grad,silo,lime,shap")
    p.add_argument("--bench-instances", type=int, default=20)
    p.add_argument("--repetitions", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args) or 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # bad flag values surface as config validation errors
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
