"""Shared vocabulary for the rest of the package: feature domains, instances,
binary classification problems, the probabilistic classifier contract, and
per-feature attribution scores.

Everything here is immutable after construction and stored as float64.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "DataError",
    "NumericalError",
    "FeatureDomain",
    "Instance",
    "ClassificationProblem",
    "ProbabilityVector",
    "AttributionScores",
    "ProbabilisticClassifier",
    "replace_feature",
    "predict",
]


class DataError(ValueError):
    """Malformed or unusable input data (parsing, shapes, label sets)."""


class NumericalError(ArithmeticError):
    """A numeric procedure failed: divergent training, singular solve."""


def _frozen_array(values, *, dtype=np.float64, ndim: int | None = None) -> np.ndarray:
    """Copy to a read-only array so dataclass fields stay immutable."""
    arr = np.array(values, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FeatureDomain:
    """Closed interval of admissible values for one feature.

    Defaults to the whole real line. Bounds may be infinite but must be
    strictly ordered.
    """

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("domain bounds must not be NaN")
        if not self.lower < self.upper:
            raise ValueError(f"domain requires lower < upper, got [{self.lower}, {self.upper}]")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


UNBOUNDED = FeatureDomain()


@dataclass(frozen=True, eq=False)
class Instance:
    """One input point: a vector of feature values plus the feature names."""

    values: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        values = _frozen_array(self.values, ndim=1)
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != values.shape[0]:
            raise ValueError(
                f"{values.shape[0]} values but {len(names)} feature names"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("instance values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)

    @property
    def num_features(self) -> int:
        return self.values.shape[0]


def replace_feature(x: Instance, i: int, value: float, domain: FeatureDomain = UNBOUNDED) -> Instance:
    """Return a copy of x with component i set to value.

    Pure: x itself is never modified. Replacing with the current value
    yields an instance equal to x.
    """
    if not 0 <= i < x.num_features:
        raise IndexError(f"feature index {i} out of range for {x.num_features} features")
    value = float(value)
    if not domain.contains(value):
        raise ValueError(f"value {value} outside domain [{domain.lower}, {domain.upper}]")
    out = x.values.copy()
    out[i] = value
    return Instance(out, x.feature_names)


@dataclass(frozen=True, eq=False)
class ClassificationProblem:
    """A labelled dataset over a fixed feature space.

    Rows are stored as a matrix X with integer label indices y into the
    ordered label tuple. For binary problems the second label is the
    positive class.
    """

    feature_names: tuple[str, ...]
    domains: tuple[FeatureDomain, ...]
    labels: tuple
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _frozen_array(self.X, ndim=2)
        y = _frozen_array(self.y, dtype=np.int64, ndim=1)
        names = tuple(str(n) for n in self.feature_names)
        domains = tuple(self.domains)
        labels = tuple(self.labels)
        if len(labels) < 2:
            raise DataError("a classification problem needs at least two labels")
        if len(set(labels)) != len(labels):
            raise DataError("labels must be distinct")
        if len(names) != X.shape[1] or len(domains) != X.shape[1]:
            raise DataError("feature names, domains and X columns must agree")
        if y.shape[0] != X.shape[0]:
            raise DataError("X and y row counts differ")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains non-finite values")
        if y.size and (y.min() < 0 or y.max() >= len(labels)):
            raise DataError("label index out of range")
        for j, dom in enumerate(domains):
            col = X[:, j]
            if col.size and (col.min() < dom.lower or col.max() > dom.upper):
                raise DataError(f"feature {names[j]} leaves its domain")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_arrays(cls, X, y, feature_names=None, labels=(0, 1), domains=None) -> "ClassificationProblem":
        X = np.asarray(X, dtype=np.float64)
        if feature_names is None:
            feature_names = tuple(f"f{j}" for j in range(X.shape[1]))
        if domains is None:
            domains = tuple(UNBOUNDED for _ in range(X.shape[1]))
        return cls(tuple(feature_names), tuple(domains), tuple(labels), X, np.asarray(y))

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    @property
    def num_examples(self) -> int:
        return self.X.shape[0]

    @property
    def is_binary(self) -> bool:
        return len(self.labels) == 2

    def instance(self, i: int) -> Instance:
        if not 0 <= i < self.num_examples:
            raise IndexError(f"instance index {i} out of range for {self.num_examples} examples")
        return Instance(self.X[i], self.feature_names)

    def examples(self) -> Iterator[tuple[Instance, object]]:
        for i in range(self.num_examples):
            yield self.instance(i), self.labels[self.y[i]]

    def subset(self, indices) -> "ClassificationProblem":
        indices = np.asarray(indices, dtype=np.int64)
        return ClassificationProblem(
            self.feature_names, self.domains, self.labels, self.X[indices], self.y[indices]
        )


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """One probability per label, in label order. Entries sum to one."""

    entries: np.ndarray
    labels: tuple

    def __post_init__(self):
        entries = _frozen_array(self.entries, ndim=1)
        labels = tuple(self.labels)
        if entries.shape[0] != len(labels):
            raise ValueError("one entry per label required")
        if entries.size and (entries.min() < 0.0 or entries.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(entries.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {entries.sum()}, not 1")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "labels", labels)

    def probability_of(self, label) -> float:
        try:
            return float(self.entries[self.labels.index(label)])
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None


@dataclass(frozen=True, eq=False)
class AttributionScores:
    """Per-feature relevance scores for one prediction C_label(x)."""

    scores: np.ndarray
    label: object
    input: Instance

    def __post_init__(self):
        scores = _frozen_array(self.scores, ndim=1)
        if scores.shape[0] != self.input.num_features:
            raise ValueError("one score per input feature required")
        if not np.all(np.isfinite(scores)):
            raise ValueError("attribution scores must be finite")
        object.__setattr__(self, "scores", scores)

    @property
    def num_features(self) -> int:
        return self.scores.shape[0]


class ProbabilisticClassifier(abc.ABC):
    """Binary probabilistic classifier contract.

    A single sigmoid-style output models the positive class; the negative
    class receives the complement. label_order is (negative, positive).
    """

    label_order: tuple = ("0", "1")

    @property
    @abc.abstractmethod
    def num_features(self) -> int:
        ...

    @abc.abstractmethod
    def positive_probability(self, values: np.ndarray) -> float:
        """P(positive label | values) for a single input vector."""

    def positive_probabilities(self, X: np.ndarray) -> np.ndarray:
        """Row-wise positive probabilities. Override for a vectorized path."""
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.positive_probability(row) for row in X])

    def probability(self, values: np.ndarray, label) -> float:
        p = self.positive_probability(values)
        return p if label == self.label_order[1] else 1.0 - p

    def probabilities(self, X: np.ndarray, label) -> np.ndarray:
        p = self.positive_probabilities(X)
        return p if label == self.label_order[1] else 1.0 - p

    def check_label(self, label) -> None:
        if label not in self.label_order:
            raise ValueError(f"label {label!r} not in {self.label_order}")

    @property
    def differentiable(self) -> bool:
        return False

    def gradient(self, values: np.ndarray, label) -> np.ndarray:
        raise NotImplementedError("classifier has no analytic gradient")


def predict(classifier: ProbabilisticClassifier, x: Instance) -> ProbabilityVector:
    """Evaluate the classifier on x and return the full probability vector.

    Pure and deterministic: identical arguments give bit-identical output.
    """
    if x.num_features != classifier.num_features:
        raise ValueError(
            f"instance has {x.num_features} features, classifier expects {classifier.num_features}"
        )
    p = float(classifier.positive_probability(x.values))
    return ProbabilityVector(np.array([1.0 - p, p]), tuple(classifier.label_order))
