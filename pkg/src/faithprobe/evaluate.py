"""Agreement statistics and benchmarking for attribution methods.

Fidelity is measured as Spearman rank correlation between a method's
scores and a per-instance reference (linear-model weights, or gradients
for nonlinear models), averaged over instances. Runtime is wall-clock
per explanation on a monotonic timer.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import ClassificationProblem, DataError, ProbabilisticClassifier

__all__ = [
    "spearman_rho",
    "FidelityResult",
    "fidelity_vs_reference",
    "runtime_bench",
    "ResultTable",
    "classification_metrics",
    "METHOD_COLUMNS",
]

METHOD_COLUMNS = ("GRAD", "SILO", "LIME", "SHAP")


def spearman_rho(a, b) -> float:
    """Spearman rank correlation: Pearson correlation of fractional ranks.

    Ties receive their average rank. Constant vectors have no rank
    ordering and are rejected. When neither vector has ties the
    equivalent sum-of-squared-rank-differences form is used, which is
    exact for identical or reversed orderings.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("vectors must have equal length")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two entries")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DataError("rank correlation of a constant vector is undefined")
    ra = rankdata(a, method="average")
    rb = rankdata(b, method="average")
    tie_free = len(np.unique(a)) == n and len(np.unique(b)) == n
    if tie_free:
        d2 = float(np.sum((ra - rb) ** 2))
        rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    else:
        ra = ra - ra.mean()
        rb = rb - rb.mean()
        rho = float(np.dot(ra, rb) / np.sqrt(np.dot(ra, ra) * np.dot(rb, rb)))
    return float(min(1.0, max(-1.0, rho)))


@dataclass(frozen=True)
class FidelityResult:
    mean_rho: float
    num_instances: int
    num_skipped: int  # constant score vectors carry no ranking


def fidelity_vs_reference(reference_scores, method_scores) -> FidelityResult:
    """Mean per-instance Spearman correlation against a reference.

    Both arguments are aligned sequences of per-instance score vectors.
    Instances where either vector is constant are excluded from the mean
    and counted separately.
    """
    refs = [np.asarray(r, dtype=np.float64).ravel() for r in reference_scores]
    meth = [np.asarray(m, dtype=np.float64).ravel() for m in method_scores]
    if len(refs) != len(meth):
        raise ValueError("reference and method score lists must align")
    if not refs:
        raise DataError("no instances to evaluate")
    rhos = []
    skipped = 0
    for r, m in zip(refs, meth):
        if r.shape != m.shape:
            raise ValueError("score vectors must have equal length")
        if np.all(r == r[0]) or np.all(m == m[0]):
            skipped += 1
            continue
        rhos.append(spearman_rho(r, m))
    if not rhos:
        raise DataError("every instance had a constant score vector")
    return FidelityResult(float(np.mean(rhos)), len(rhos), skipped)


def runtime_bench(explain_fn, instances, repetitions: int = 3) -> float:
    """Mean wall-clock milliseconds per explanation.

    Runs one untimed warm-up pass over the instances, then repetitions
    timed passes on a monotonic clock. Single-threaded by design so
    numbers are comparable across methods.
    """
    if repetitions < 3:
        raise ValueError("at least 3 repetitions are required")
    instances = list(instances)
    if not instances:
        raise ValueError("no instances to benchmark")
    for x in instances:
        explain_fn(x)
    total = 0.0
    for _ in range(repetitions):
        start = time.perf_counter()
        for x in instances:
            explain_fn(x)
        total += time.perf_counter() - start
    return 1000.0 * total / (repetitions * len(instances))


class ResultTable:
    """(dataset, method) -> value table with CSV and markdown renderings.

    Methods appear in the fixed column order GRAD, SILO, LIME, SHAP;
    datasets appear in insertion order. Missing cells render empty.
    """

    def __init__(self, value_format: str = ".3f"):
        self._cells: dict[tuple[str, str], float] = {}
        self._datasets: list[str] = []
        self.value_format = value_format

    def set(self, dataset: str, method: str, value: float) -> None:
        method = method.upper()
        if method not in METHOD_COLUMNS:
            raise ValueError(f"unknown method column {method!r}")
        if dataset not in self._datasets:
            self._datasets.append(dataset)
        self._cells[(dataset, method)] = float(value)

    def get(self, dataset: str, method: str) -> float | None:
        return self._cells.get((dataset, method.upper()))

    def _fmt(self, dataset: str, method: str) -> str:
        value = self._cells.get((dataset, method))
        return "" if value is None else format(value, self.value_format)

    def write_csv(self, out, header_comment: str | None = None) -> None:
        if header_comment:
            out.write(f"# {header_comment}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["dataset", *METHOD_COLUMNS])
        for ds in self._datasets:
            writer.writerow([ds, *(self._fmt(ds, m) for m in METHOD_COLUMNS)])

    def to_markdown(self) -> str:
        rows = [["dataset", *METHOD_COLUMNS]]
        for ds in self._datasets:
            rows.append([ds, *(self._fmt(ds, m) for m in METHOD_COLUMNS)])
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        lines = []
        for i, row in enumerate(rows):
            lines.append("| " + " | ".join(cell.ljust(w) for cell, w in zip(row, widths)) + " |")
            if i == 0:
                lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
        return "\n".join(lines)


def classification_metrics(classifier: ProbabilisticClassifier, problem: ClassificationProblem) -> tuple[float, float]:
    """Accuracy and positive-class F1 at the 0.5 threshold."""
    probs = classifier.positive_probabilities(problem.X)
    predicted = (probs >= 0.5).astype(np.int64)
    actual = problem.y
    accuracy = float((predicted == actual).mean())
    tp = int(np.sum((predicted == 1) & (actual == 1)))
    fp = int(np.sum((predicted == 1) & (actual == 0)))
    fn = int(np.sum((predicted == 0) & (actual == 1)))
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return accuracy, f1
