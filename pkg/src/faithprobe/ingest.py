"""Dataset parsing, splitting, standardization and artifact persistence.

CSV files must be UTF-8 with a header row, '.' as the decimal separator
and no missing cells; parse failures name the offending row and column.
Models and problems serialize to a self-describing UTF-8 JSON document
whose floats are written with 17 significant digits, which makes the
round trip bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ClassificationProblem, DataError, FeatureDomain, _frozen_array
from .classifiers import HIDDEN_ACTIVATIONS, LogisticRegressionModel, MLPModel

__all__ = [
    "StandardizationStats",
    "SplitSpec",
    "load_csv",
    "split_and_standardize",
    "TrainedBundle",
    "save_bundle",
    "load_bundle",
    "save_problem",
    "load_problem",
]


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Per-feature mean and standard deviation taken from a train split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean, ndim=1)
        std = _frozen_array(self.std, ndim=1)
        if mean.shape != std.shape:
            raise ValueError("mean and std must have equal length")
        if not np.all(std > 0):
            raise DataError("standard deviation must be positive for every feature")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def invert(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/test split settings."""

    test_fraction: float = 0.2
    seed: int = 42
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")


def _sort_labels(raw: set[str]) -> tuple[str, str]:
    """Order two label strings; numeric when both parse, else lexicographic.

    The second label is the positive class.
    """
    values = sorted(raw)
    try:
        values = sorted(raw, key=float)
    except ValueError:
        pass
    return values[0], values[1]


def load_csv(path, label_column: str | None = None) -> ClassificationProblem:
    """Parse a CSV file into a binary classification problem.

    label_column selects the label by header name; by default the final
    column is the label. All feature cells must parse as decimal reals;
    empty cells, non-numeric cells, non-binary label sets and features
    that are constant across the whole file are errors. Row and column
    coordinates in messages are 1-based and count the header as row 1.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not valid UTF-8: {exc}") from None

    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file, header row required") from None
    header = [h.strip() for h in header]
    if any(not h for h in header):
        raise DataError(f"{path}: blank column name in header")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")

    if label_column is None:
        label_idx = len(header) - 1
    else:
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
    feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
    if not feature_names:
        raise DataError(f"{path}: no feature columns besides the label")

    rows: list[list[float]] = []
    raw_labels: list[str] = []
    for row_num, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}"
            )
        features = []
        for col_idx, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}: missing value at row {row_num}, column {col_idx + 1}")
            if col_idx == label_idx:
                raw_labels.append(cell)
                continue
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse {cell!r} at row {row_num}, column {col_idx + 1}"
                ) from None
            if not math.isfinite(value):
                raise DataError(
                    f"{path}: non-finite value at row {row_num}, column {col_idx + 1}"
                )
            features.append(value)
        rows.append(features)

    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    distinct = set(raw_labels)
    if len(distinct) != 2:
        raise DataError(
            f"{path}: label column must take exactly 2 distinct values, found {len(distinct)}"
        )
    labels = _sort_labels(distinct)
    X = np.array(rows, dtype=np.float64)
    y = np.array([0 if v == labels[0] else 1 for v in raw_labels])
    for j, name in enumerate(feature_names):
        if np.all(X[:, j] == X[0, j]):
            raise DataError(f"{path}: feature {name!r} is constant and cannot be standardized")
    return ClassificationProblem.from_arrays(X, y, feature_names, labels)


def split_and_standardize(problem: ClassificationProblem, spec: SplitSpec = SplitSpec()):
    """Split into train and test and z-score both with train statistics.

    The permutation is drawn once from the seed when shuffling; the train
    side takes floor((1 - test_fraction) * N) rows and the test side the
    remainder. Standardization statistics come from the train split only.
    Returns (train, test, stats).
    """
    n = problem.num_examples
    n_train = int(math.floor((1.0 - spec.test_fraction) * n + 1e-9))
    n_test = n - n_train
    if n_train < 1 or n_test < 1:
        raise DataError(f"split of {n} rows leaves an empty side")
    if spec.shuffle:
        order = np.random.default_rng(spec.seed).permutation(n)
    else:
        order = np.arange(n)
    train_rows, test_rows = order[:n_train], order[n_train:]

    X_train = problem.X[train_rows]
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    for j, s in enumerate(std):
        if s == 0.0:
            raise DataError(
                f"feature {problem.feature_names[j]!r} is constant on the train split"
            )
    stats = StandardizationStats(mean, std)

    def _standardized(rows):
        Z = stats.apply(problem.X[rows])
        domains = tuple(
            FeatureDomain((d.lower - m) / s, (d.upper - m) / s)
            for d, m, s in zip(problem.domains, stats.mean, stats.std)
        )
        return ClassificationProblem(problem.feature_names, domains, problem.labels,
                                     Z, problem.y[rows])

    return _standardized(train_rows), _standardized(test_rows), stats


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("only finite floats are serialized")
    if x == 0.0 and math.copysign(1.0, x) < 0:
        return "-0.0"  # '.17g' would drop the sign-carrying decimal
    return format(float(x), ".17g")


def _emit(obj, out: list[str]) -> None:
    """Minimal JSON writer so floats carry 17 significant digits."""
    if isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _emit(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(",")
            _emit(value, out)
        out.append("]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(tree: dict) -> str:
    out: list[str] = []
    _emit(tree, out)
    return "".join(out)


def _float_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-dimensional array in document")
    return arr


@dataclass(frozen=True, eq=False)
class TrainedBundle:
    """A trained model together with everything needed to reuse it:

    the standardization statistics of its train split, the feature names
    and the split settings that produced that train split.
    """

    model: LogisticRegressionModel | MLPModel
    feature_names: tuple[str, ...]
    stats: StandardizationStats
    split: SplitSpec


def _model_tree(model) -> dict:
    if isinstance(model, LogisticRegressionModel):
        return {
            "kind": "logistic_regression",
            "weights": model.weights,
            "bias": model.bias,
            "labels": list(model.label_order),
        }
    if isinstance(model, MLPModel):
        return {
            "kind": "mlp",
            "hidden_activation": model.hidden_activation,
            "output_activation": "logistic",
            "layers": [{"weights": W, "bias": b} for W, b in model.layers],
            "labels": list(model.label_order),
        }
    raise TypeError(f"cannot serialize model type {type(model).__name__}")


def _model_from_tree(tree: dict):
    kind = tree.get("kind")
    labels = tuple(tree.get("labels", ("0", "1")))
    if kind == "logistic_regression":
        return LogisticRegressionModel(_float_array(tree["weights"], 1),
                                       float(tree["bias"]), labels)
    if kind == "mlp":
        activation = tree.get("hidden_activation")
        if activation not in HIDDEN_ACTIVATIONS:
            raise DataError(f"unknown hidden activation {activation!r}")
        layers = [(_float_array(layer["weights"], 2), _float_array(layer["bias"], 1))
                  for layer in tree["layers"]]
        return MLPModel(layers, activation, labels)
    raise DataError(f"unknown model kind {kind!r}")


def save_bundle(path, bundle: TrainedBundle) -> None:
    tree = {
        "format": "faithprobe-model",
        "version": 1,
        "model": _model_tree(bundle.model),
        "feature_names": list(bundle.feature_names),
        "standardization": {"mean": bundle.stats.mean, "std": bundle.stats.std},
        "split": {
            "test_fraction": bundle.split.test_fraction,
            "seed": bundle.split.seed,
            "shuffle": bundle.split.shuffle,
        },
    }
    Path(path).write_text(_dumps(tree), encoding="utf-8")


def load_bundle(path) -> TrainedBundle:
    path = Path(path)
    try:
        tree = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path} is not a valid model document: {exc}") from None
    if tree.get("format") != "faithprobe-model":
        raise DataError(f"{path} is not a model document")
    model = _model_from_tree(tree["model"])
    stats = StandardizationStats(_float_array(tree["standardization"]["mean"], 1),
                                 _float_array(tree["standardization"]["std"], 1))
    split_tree = tree["split"]
    split = SplitSpec(float(split_tree["test_fraction"]), int(split_tree["seed"]),
                      bool(split_tree["shuffle"]))
    names = tuple(str(n) for n in tree["feature_names"])
    if len(names) != model.num_features or len(names) != stats.mean.shape[0]:
        raise DataError(f"{path}: inconsistent feature counts in document")
    return TrainedBundle(model, names, stats, split)


def _bound_to_doc(v: float):
    # JSON numbers cannot express infinities, so open bounds become strings
    return format(v, ".17g") if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def save_problem(path, problem: ClassificationProblem) -> None:
    tree = {
        "format": "faithprobe-problem",
        "version": 1,
        "feature_names": list(problem.feature_names),
        "domains": [[_bound_to_doc(d.lower), _bound_to_doc(d.upper)] for d in problem.domains],
        "labels": [str(l) for l in problem.labels],
        "X": problem.X,
        "y": problem.y.tolist(),
    }
    Path(path).write_text(_dumps(tree), encoding="utf-8")


def load_problem(path) -> ClassificationProblem:
    path = Path(path)
    try:
        tree = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"problem file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path} is not a valid problem document: {exc}") from None
    if tree.get("format") != "faithprobe-problem":
        raise DataError(f"{path} is not a problem document")
    domains = tuple(FeatureDomain(float(lo), float(hi)) for lo, hi in tree["domains"])
    return ClassificationProblem(
        tuple(tree["feature_names"]), domains, tuple(tree["labels"]),
        _float_array(tree["X"], 2), np.array(tree["y"], dtype=np.int64),
    )
