"""End-to-end acceptance checks over the real datasets.

Each test prints exactly one line, "ACCEPTANCE n: PASS ..." or
"ACCEPTANCE n: FAIL ...", with the measured quantities, then asserts.
Dataset-bound checks verify every dataset file that is present and say
so when one is absent; they skip only when none is available. wdbc.csv
is materialized automatically; pima.csv and banknote.csv must be
supplied (see README).
"""
from __future__ import annotations

from time import perf_counter

import numpy as np
import pytest
from scipy.special import expit

from faithprobe.attribution import (
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
)
from faithprobe.classifiers import FunctionClassifier, finite_diff_gradient, sigmoid_prime
from faithprobe.core import AttributionScores
from faithprobe.evaluate import (
    classification_metrics,
    fidelity_vs_reference,
    runtime_bench,
    spearman_rho,
)
from faithprobe.faithfulness import (
    VIOLATED,
    adaptive_epsilon_probe,
    error_decay,
    error_dominance,
    qualitative_probe,
)

from conftest import (
    brute_force_shapley,
    coalition_value_fn,
    data_directory,
    dataset_path,
    make_instance,
    random_mlp,
)

DATASETS = ("pima", "banknote", "wdbc")

# reference values the accuracy bands centre on; exact reproduction is
# impossible (split and seed are free), hence the tolerances
LR_ACCURACY_TARGET = {"pima": 0.760, "banknote": 0.964, "wdbc": 0.956}
MLP_ACCURACY_TARGET = {"pima": 0.721, "banknote": 0.978, "wdbc": 0.982}


@pytest.fixture
def report(capsys):
    def _report(tag, ok, detail):
        status = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\nACCEPTANCE {tag}: {status} - {detail}")
        assert ok, f"acceptance {tag} failed: {detail}"

    return _report


def _each_dataset(names=DATASETS):
    avail = [n for n in names if dataset_path(n) is not None]
    if not avail:
        pytest.skip(f"none of {', '.join(names)} available under {data_directory()}")
    missing = [n for n in names if n not in avail]
    return avail, missing


def _absent_note(missing) -> str:
    if not missing:
        return ""
    return f"; {', '.join(missing)} not checked (dataset file absent)"


def _positive(model) -> str:
    return model.label_order[1]


def test_01_gradient_recovers_linear_ranking(models, report):
    avail, missing = _each_dataset()
    loaded = {name: models(name, "lr") for name in avail}
    ok = True
    parts = []
    for name in avail:
        _, test, model = loaded[name]
        label = _positive(model)
        t0 = perf_counter()
        rhos = [spearman_rho(model.weights,
                             gradient_scores(model, test.instance(i), label).scores)
                for i in range(test.num_examples)]
        elapsed = perf_counter() - t0
        mean = float(np.mean(rhos))
        ok = ok and mean == 1.0 and elapsed < 5.0
        parts.append(f"{name} mean_rho={mean:.3f} in {elapsed:.2f}s")
    report("1", ok, "gradient vs linear weights, exact 1.000 required: "
           + "; ".join(parts) + _absent_note(missing))


def test_02_lime_tracks_linear_weights(models, report):
    avail, missing = _each_dataset()
    loaded = {name: models(name, "lr") for name in avail}
    ok = True
    parts = []
    t0 = perf_counter()
    for name in avail:
        _, test, model = loaded[name]
        label = _positive(model)
        per_seed = []
        for seed in (0, 1, 2):
            cfg = LimeConfig(seed=seed)
            rhos = [spearman_rho(
                model.weights,
                lime_scores(model, test.instance(i), label, cfg,
                            np.random.default_rng([seed, i])).scores)
                for i in range(test.num_examples)]
            per_seed.append(float(np.mean(rhos)))
        mean = float(np.mean(per_seed))
        ok = ok and mean >= 0.90
        parts.append(f"{name} mean_rho={mean:.3f}")
    elapsed = perf_counter() - t0
    ok = ok and elapsed < 300.0
    report("2", ok, "lime vs linear weights over seeds 0,1,2 (>= 0.90): "
           + "; ".join(parts) + f"; total {elapsed:.1f}s" + _absent_note(missing))


def test_03_silo_tracks_linear_weights(models, report):
    avail, missing = _each_dataset()
    loaded = {name: models(name, "lr") for name in avail}
    ok = True
    parts = []
    for name in avail:
        train, test, model = loaded[name]
        label = _positive(model)
        cfg = SiloConfig()
        forest = fit_random_forest(train, cfg)
        rhos = [spearman_rho(
            model.weights,
            silo_scores(model, test.instance(i), label, forest, train, cfg).scores)
            for i in range(test.num_examples)]
        mean = float(np.mean(rhos))
        if name in ("pima", "banknote"):
            ok = ok and mean >= 0.90
            parts.append(f"{name} mean_rho={mean:.3f}")
        else:
            parts.append(f"{name} mean_rho={mean:.3f} (reported, unconstrained)")
    report("3", ok, "silo vs linear weights (>= 0.90 on pima, banknote): "
           + "; ".join(parts) + _absent_note(missing))


def test_04_gradient_weight_ratio_is_constant(models, report):
    avail, missing = _each_dataset()
    ok = True
    parts = []
    for name in avail:
        _, test, model = models(name, "lr")
        label = _positive(model)
        mask = np.abs(model.weights) > 1e-6
        worst = 0.0
        for i in range(test.num_examples):
            g = gradient_scores(model, test.instance(i), label).scores
            ratios = g[mask] / model.weights[mask]
            worst = max(worst, float(ratios.max() - ratios.min()))
        ok = ok and worst < 1e-10
        parts.append(f"{name} max_ratio_spread={worst:.2e}")
    report("4", ok, "per-instance grad_i/w_i spread (< 1e-10): "
           + "; ".join(parts) + _absent_note(missing))


def test_05_backprop_matches_finite_differences(report):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 10))
        model = random_mlp(rng, k)
        x = rng.normal(size=k)
        analytic = model.gradient(x, "1")
        numeric = finite_diff_gradient(model, x, "1", epsilon=1e-5)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    ok = worst < 1e-4
    report("5", ok, f"100 random tanh networks, max |backprop - symdiff| = {worst:.2e} (< 1e-4)")


def test_06_classifier_accuracy_bands(models, report):
    avail, missing = _each_dataset()
    ok = True
    parts = []
    for name in avail:
        _, test, lr = models(name, "lr")
        lr_acc, _ = classification_metrics(lr, test)
        lr_ok = abs(lr_acc - LR_ACCURACY_TARGET[name]) <= 0.05
        _, test, mlp = models(name, "mlp")
        mlp_acc, _ = classification_metrics(mlp, test)
        mlp_ok = abs(mlp_acc - MLP_ACCURACY_TARGET[name]) <= 0.07
        ok = ok and lr_ok and mlp_ok
        parts.append(f"{name} lr={lr_acc:.3f} (target {LR_ACCURACY_TARGET[name]:.3f}+-0.05) "
                     f"mlp={mlp_acc:.3f} (target {MLP_ACCURACY_TARGET[name]:.3f}+-0.07)")
    report("6", ok, "test accuracies: " + "; ".join(parts) + _absent_note(missing))


def test_07_gradient_passes_qualitative_probes(models, report):
    avail, missing = _each_dataset()
    lr_loaded = {name: models(name, "lr") for name in avail}
    mlp_loaded = {name: models(name, "mlp_smooth") for name in avail}
    ok = True
    parts = []
    t0 = perf_counter()
    for name in avail:
        _, test, model = lr_loaded[name]
        label = _positive(model)
        clean = 0
        for i in range(test.num_examples):
            g = gradient_scores(model, test.instance(i), label)
            verdict = qualitative_probe(model, g, 3.0)
            clean += VIOLATED not in verdict.statuses
        lr_frac = clean / test.num_examples
        ok = ok and lr_frac == 1.0
        parts.append(f"{name} lr {clean}/{test.num_examples} at eps=3")

        _, test, model = mlp_loaded[name]
        label = _positive(model)
        passed = gated = 0
        for i in range(test.num_examples):
            g = gradient_scores(model, test.instance(i), label)
            gated += int(np.sum(np.abs(g.scores) > 1e-4))
            eps, _ = adaptive_epsilon_probe(model, g, score_floor=1e-4)
            passed += eps is not None
        mlp_frac = passed / test.num_examples
        ok = ok and mlp_frac >= 0.99
        parts.append(f"{name} mlp {passed}/{test.num_examples} adaptive ({gated} gated features)")
    elapsed = perf_counter() - t0
    ok = ok and elapsed < 120.0
    report("7", ok, "qualitative probe pass rates (lr 100%, smooth mlp >= 99%): "
           + "; ".join(parts) + f"; {elapsed:.1f}s" + _absent_note(missing))


def test_08_squared_logit_witness(report):
    witness = FunctionClassifier(
        lambda v: float(expit(v[0] ** 2)), 1,
        gradient_fn=lambda v: np.array([2.0 * v[0] * sigmoid_prime(v[0] ** 2)]),
        batch_fn=lambda X: expit(X[:, 0] ** 2))
    at = witness.positive_probability
    values_ok = (abs(at([-0.5]) - 0.5622) <= 1e-3
                 and at([0.0]) == 0.5
                 and abs(at([1.0]) - 0.7311) <= 1e-3)
    x = make_instance([-0.5])
    verdicts = []
    for score in (1.0, -1.0):
        verdict = qualitative_probe(witness, AttributionScores(np.array([score]), "1", x), 2.0)
        verdicts.append(verdict.statuses[0])
    probe_ok = all(v == VIOLATED for v in verdicts)
    report("8", values_ok and probe_ok,
           f"witness values C(-0.5)={at([-0.5]):.4f} C(0)={at([0.0]):.1f} C(1)={at([1.0]):.4f}; "
           f"probe at x=-0.5 eps=2 rejects both signs: {verdicts[0]}/{verdicts[1]}")


def test_09_decay_separates_gradient_from_shifted_scores(report):
    rng = np.random.default_rng(90)
    grad_fail = shifted_pass = dominance_fail = 0
    pairs = 0
    for _ in range(50):
        k = int(rng.integers(2, 6))
        model = random_mlp(rng, k, widths=(5, 4), activation="tanh")
        x = make_instance(rng.normal(size=k))
        g = gradient_scores(model, x, "1")
        u = rng.normal(size=k)
        u /= np.linalg.norm(u)
        if not error_decay(model, g, u, initial_step=0.02).passed:
            grad_fail += 1
        for delta in (0.1, 0.5, 1.0):
            shifted = AttributionScores(g.scores + delta * u, "1", x)
            if error_decay(model, shifted, u, initial_step=0.02).passed:
                shifted_pass += 1
            dom = error_dominance(model, g, shifted, u, initial_step=0.02)
            pairs += 1
            if not (dom.passed and abs(dom.ratios[-1]) < 0.1):
                dominance_fail += 1
    ok = grad_fail == 0 and shifted_pass == 0 and dominance_fail == 0
    report("9", ok, "50 random smooth models: gradient decay fails "
           f"{grad_fail}/50, shifted scores (delta 0.1/0.5/1.0) pass {shifted_pass}/150, "
           f"dominance above 0.1 on {dominance_fail}/{pairs} pairs; all must be 0")


def test_10_kernel_shap_matches_brute_force(report):
    rng = np.random.default_rng(10)
    worst_match = worst_eff = 0.0
    for trial in range(50):
        k = int(rng.integers(2, 7))
        model = random_mlp(rng, k, widths=(4, 3))
        x = make_instance(rng.normal(size=k))
        background = rng.normal(size=(8, k))
        value_of = coalition_value_fn(model, x, "1", background)
        spread = value_of(tuple(range(k))) - value_of(())
        oracle = brute_force_shapley(value_of, k)

        exact = kernel_shap_scores(model, x, "1", ShapConfig(background, EXACT, seed=trial))
        worst_match = max(worst_match, float(np.max(np.abs(exact.scores - oracle))))
        worst_eff = max(worst_eff, abs(float(np.sum(exact.scores)) - spread))

        sampled = kernel_shap_scores(model, x, "1", ShapConfig(background, 64, seed=trial))
        worst_eff = max(worst_eff, abs(float(np.sum(sampled.scores)) - spread))
    ok = worst_match < 1e-9 and worst_eff < 1e-9
    report("10", ok, f"50 random models k<=6: max |kernel - brute force| = {worst_match:.2e} "
           f"(< 1e-9), max efficiency violation incl. sampled = {worst_eff:.2e} (< 1e-9)")


def test_11_runtime_ordering(models, report):
    if dataset_path("wdbc") is None:
        pytest.skip("wdbc.csv could not be materialized")
    train, test, model = models("wdbc", "mlp")
    label = _positive(model)
    instances = [test.instance(i) for i in range(min(10, test.num_examples))]

    silo_cfg = SiloConfig()
    forest = fit_random_forest(train, silo_cfg)
    lime_cfg = LimeConfig(seed=0)
    shap_cfg = ShapConfig(subsample_background(train, 100, 0), None, 0)  # k=30: sampled

    ms = {
        "grad": runtime_bench(lambda x: gradient_scores(model, x, label), instances, 3),
        "lime": runtime_bench(
            lambda x: lime_scores(model, x, label, lime_cfg, np.random.default_rng(0)),
            instances, 3),
        "silo": runtime_bench(
            lambda x: silo_scores(model, x, label, forest, train, silo_cfg), instances, 3),
        "shap": runtime_bench(
            lambda x: kernel_shap_scores(model, x, label, shap_cfg, np.random.default_rng(0)),
            instances, 3),
    }
    ok = (ms["grad"] < ms["lime"] and ms["grad"] < ms["silo"]
          and ms["silo"] < ms["shap"] and ms["lime"] < ms["shap"])
    report("11", ok, "mean ms/explanation on wdbc mlp (ordering only, absolute "
           "times are hardware-bound): "
           + ", ".join(f"{m}={ms[m]:.2f}" for m in ("grad", "silo", "lime", "shap"))
           + "; need grad < lime, grad < silo, silo < shap, lime < shap")


def test_12_lime_tracks_network_gradients(models, report):
    avail, missing = _each_dataset()
    smooth = {name: models(name, "mlp_smooth") for name in avail}
    relu = {name: models(name, "mlp") for name in avail}
    ok = True
    parts = []
    for name in avail:
        train, test, model = smooth[name]
        label = _positive(model)
        reference = [gradient_scores(model, test.instance(i), label).scores
                     for i in range(test.num_examples)]
        per_seed = []
        for seed in (0, 1, 2):
            cfg = LimeConfig(seed=seed)
            rhos = [spearman_rho(
                reference[i],
                lime_scores(model, test.instance(i), label, cfg,
                            np.random.default_rng([seed, i])).scores)
                for i in range(test.num_examples)]
            per_seed.append(float(np.mean(rhos)))
        mean = float(np.mean(per_seed))
        ok = ok and mean >= 0.80
        parts.append(f"{name} lime={mean:.3f}")

        # unconstrained companion values on the same smooth network
        silo_cfg = SiloConfig()
        forest = fit_random_forest(train, silo_cfg)
        silo_rho = float(np.mean([
            spearman_rho(reference[i],
                         silo_scores(model, test.instance(i), label, forest,
                                     train, silo_cfg).scores)
            for i in range(test.num_examples)]))
        shap_cfg = ShapConfig(subsample_background(train, 100, 0), None, 0)
        shap_rho = float(np.mean([
            spearman_rho(reference[i],
                         kernel_shap_scores(model, x_i, label, shap_cfg,
                                            np.random.default_rng([0, i])).scores)
            for i, x_i in ((i, test.instance(i)) for i in range(test.num_examples))]))
        parts.append(f"{name} silo={silo_rho:.3f} shap={shap_rho:.3f} (reported, unconstrained)")

        # the kinked default network is shown alongside, not gated on;
        # dead-gradient instances have constant score vectors and are skipped
        _, rtest, rmodel = relu[name]
        rlabel = _positive(rmodel)
        rcfg = LimeConfig(seed=0)
        result = fidelity_vs_reference(
            [gradient_scores(rmodel, rtest.instance(i), rlabel).scores
             for i in range(rtest.num_examples)],
            [lime_scores(rmodel, rtest.instance(i), rlabel, rcfg,
                         np.random.default_rng([0, i])).scores
             for i in range(rtest.num_examples)])
        parts.append(f"{name} relu default lime={result.mean_rho:.3f} over "
                     f"{result.num_instances} instances, {result.num_skipped} "
                     "zero-gradient skips (reported only)")
    report("12", ok, "lime vs smooth network gradients over seeds 0,1,2 (>= 0.80): "
           + "; ".join(parts) + _absent_note(missing))
