"""Shared fixtures: synthetic problems, dataset resolution, trained models.

Real datasets are looked up in the directory named by FAITHPROBE_DATA
(default: <repo>/data). wdbc.csv is materialized there on demand from
scikit-learn's bundled copy; pima.csv and banknote.csv must be supplied
by the user (see README), and tests that need them skip when absent.
"""
from __future__ import annotations

import os
from itertools import combinations
from math import factorial
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

from faithprobe import (
    ClassificationProblem,
    Instance,
    SplitSpec,
    TrainConfig,
    load_csv,
    split_and_standardize,
    train_logistic_regression,
    train_mlp,
)
from faithprobe.classifiers import MLPModel

REPO_ROOT = Path(__file__).resolve().parent.parent

DATASET_FILES = {
    "pima": "pima.csv",
    "banknote": "banknote.csv",
    "wdbc": "wdbc.csv",
}

# Differentiable network used by the gradient-reference experiments
# (qualitative probing and method-vs-gradient fidelity). The pipeline
# default stays relu; probing pointwise gradients of a kinked surface
# is not what those experiments are about.
SMOOTH_MLP = dict(
    hidden_activation="tanh",
    cfg=TrainConfig(max_iterations=1000, learning_rate=0.01, l2_strength=1.0,
                    tolerance=1e-4, seed=0),
)
DEFAULT_MLP_CFG = TrainConfig(max_iterations=1000, learning_rate=0.01,
                              l2_strength=1e-4, tolerance=1e-4, seed=0)
LR_CFG = TrainConfig()


def data_directory() -> Path:
    override = os.environ.get("FAITHPROBE_DATA")
    return Path(override) if override else REPO_ROOT / "data"


def materialize_wdbc(path: Path) -> bool:
    """Write wdbc.csv from scikit-learn's copy. Returns False if
    scikit-learn is unavailable."""
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError:
        return False
    bunch = load_breast_cancer()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as out:
        names = [str(n).replace(" ", "_") for n in bunch.feature_names]
        out.write(",".join(names + ["diagnosis"]) + "\n")
        for row, label in zip(bunch.data, bunch.target):
            cells = ["%.17g" % v for v in row] + [str(int(label))]
            out.write(",".join(cells) + "\n")
    return True


def dataset_path(name: str) -> Path | None:
    path = data_directory() / DATASET_FILES[name]
    if not path.exists() and name == "wdbc":
        if not materialize_wdbc(path):
            return None
    return path if path.exists() else None


@pytest.fixture(scope="session")
def datasets():
    """Memoized loader: datasets(name) -> ClassificationProblem, or skip."""
    cache: dict[str, ClassificationProblem] = {}

    def get(name: str) -> ClassificationProblem:
        if name not in cache:
            path = dataset_path(name)
            if path is None:
                pytest.skip(
                    f"dataset {name!r} not found under {data_directory()} "
                    "(set FAITHPROBE_DATA or add the file; see README)"
                )
            cache[name] = load_csv(str(path))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def models(datasets):
    """Memoized trained models: models(name, kind) with kind in
    {'lr', 'mlp', 'mlp_smooth'}. Returns (train, test, model)."""
    cache: dict[tuple, tuple] = {}

    def get(name: str, kind: str):
        key = (name, kind)
        if key not in cache:
            problem = datasets(name)
            train, test, _stats = split_and_standardize(problem, SplitSpec())
            if kind == "lr":
                model = train_logistic_regression(train, LR_CFG)
            elif kind == "mlp":
                model = train_mlp(train, cfg=DEFAULT_MLP_CFG)
            elif kind == "mlp_smooth":
                model = train_mlp(train, cfg=SMOOTH_MLP["cfg"],
                                  hidden_activation=SMOOTH_MLP["hidden_activation"])
            else:
                raise ValueError(kind)
            cache[key] = (train, test, model)
        return cache[key]

    return get


def make_linear_problem(seed=0, n=240, k=4, weights=None, bias=0.0,
                        labels=("0", "1")) -> ClassificationProblem:
    """Gaussian features with Bernoulli labels from a logistic model."""
    rng = np.random.default_rng(seed)
    weights = rng.normal(size=k) if weights is None else np.asarray(weights, float)
    X = rng.normal(size=(n, k))
    p = expit(X @ weights + bias)
    y = (rng.uniform(size=n) < p).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]  # both classes must occur
    return ClassificationProblem.from_arrays(X, y, labels=labels)


def make_instance(values, names=None) -> Instance:
    values = np.asarray(values, dtype=np.float64)
    if names is None:
        names = tuple(f"f{j}" for j in range(values.shape[0]))
    return Instance(values, tuple(names))


def random_mlp(rng: np.random.Generator, k: int, widths=(6, 5),
               activation="tanh", scale=1.0) -> MLPModel:
    """Untrained network with Gaussian parameters, for gradient checks."""
    sizes = (k, *widths, 1)
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        W = rng.normal(scale=scale / np.sqrt(fan_in), size=(fan_in, fan_out))
        b = rng.normal(scale=0.3, size=fan_out)
        layers.append((W, b))
    return MLPModel(layers, hidden_activation=activation)


def coalition_value_fn(classifier, x: Instance, label, background: np.ndarray):
    """v(S): mean prediction with off-coalition features drawn from the
    background rows. Defined from scratch so it can serve as an oracle."""
    background = np.asarray(background, dtype=np.float64)

    def value_of(coalition) -> float:
        rows = background.copy()
        for i in coalition:
            rows[:, i] = x.values[i]
        return float(np.mean(classifier.probabilities(rows, label)))

    return value_of


def brute_force_shapley(value_of, k: int) -> np.ndarray:
    """Shapley values by direct summation over all coalitions."""
    values = {}
    for size in range(k + 1):
        for coalition in combinations(range(k), size):
            values[coalition] = value_of(coalition)
    phi = np.zeros(k)
    denom = factorial(k)
    for i in range(k):
        rest = [j for j in range(k) if j != i]
        for size in range(k):
            for coalition in combinations(rest, size):
                weight = factorial(size) * factorial(k - 1 - size) / denom
                with_i = tuple(sorted(coalition + (i,)))
                phi[i] += weight * (values[with_i] - values[coalition])
    return phi
