"""Feature attribution methods for binary probabilistic classifiers.

Four scorers share one output type: analytic gradients, a perturbation
surrogate fit with a distance kernel (LIME style), a forest-neighborhood
surrogate (SILO style), and kernel SHAP with an exact mode for small k
and a paired coalition-sampling mode for larger k.

Surrogate regressions are solved through normal equations; the ridge term
keeps them well posed, and a singular system is an error only when the
ridge strength is exactly zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import (
    AttributionScores,
    ClassificationProblem,
    Instance,
    NumericalError,
    ProbabilisticClassifier,
)
from .classifiers import finite_diff_gradient

__all__ = [
    "EXACT",
    "LimeConfig",
    "SiloConfig",
    "ShapConfig",
    "DecisionTree",
    "RandomForest",
    "gradient_scores",
    "lime_scores",
    "fit_random_forest",
    "silo_scores",
    "kernel_shap_scores",
    "subsample_background",
    "weighted_ridge_fit",
    "write_score_table",
]

EXACT = "exact"

METHOD_ORDER = ("grad", "silo", "lime", "shap")


def weighted_ridge_fit(X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray,
                       ridge: float) -> tuple[np.ndarray, float]:
    """Solve the weighted least-squares fit y ~ intercept + X beta.

    The ridge penalty applies to the coefficients only, never the
    intercept. Returns (coefficients, intercept).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(sample_weight, dtype=np.float64)
    if ridge < 0:
        raise ValueError("ridge strength must be non-negative")
    if np.any(w < 0):
        raise ValueError("sample weights must be non-negative")
    n, k = X.shape
    A = np.hstack([np.ones((n, 1)), X])
    AtW = A.T * w
    H = AtW @ A
    H[1:, 1:] += ridge * np.eye(k)
    try:
        beta = np.linalg.solve(H, AtW @ y)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "singular normal equations; a positive ridge strength resolves this"
        ) from None
    if not np.all(np.isfinite(beta)):
        raise NumericalError("normal equations produced non-finite coefficients")
    return beta[1:], float(beta[0])


def gradient_scores(classifier: ProbabilisticClassifier, x: Instance, label,
                    fd_epsilon: float | None = None) -> AttributionScores:
    """Input gradient of C_label at x, the reference scoring method.

    Uses the classifier's analytic gradient when available; otherwise a
    symmetric finite difference with fd_epsilon. A classifier without
    either path is an error.
    """
    classifier.check_label(label)
    if classifier.differentiable:
        g = classifier.gradient(x.values, label)
    elif fd_epsilon is not None:
        g = finite_diff_gradient(classifier, x.values, label, fd_epsilon)
    else:
        raise ValueError(
            "classifier has no analytic gradient and no fd_epsilon was given"
        )
    return AttributionScores(g, label, x)


@dataclass(frozen=True)
class LimeConfig:
    """Perturbation-surrogate settings.

    kernel_width of None resolves to 0.75 * sqrt(k) at call time.
    Perturbations are Gaussian around the explained point with standard
    deviation perturbation_scale per feature (inputs are standardized, so
    scale 1.0 matches the data spread).
    """

    num_samples: int = 5000
    perturbation_scale: float = 1.0
    kernel_width: float | None = None
    l2_strength: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 2:
            raise ValueError("num_samples must be at least 2")
        if not self.perturbation_scale > 0:
            raise ValueError("perturbation_scale must be positive")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ValueError("kernel_width must be positive")
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be non-negative")


def lime_scores(classifier: ProbabilisticClassifier, x: Instance, label,
                cfg: LimeConfig = LimeConfig(), rng: np.random.Generator | None = None) -> AttributionScores:
    """Coefficients of a distance-weighted ridge fit around x.

    Samples perturbations of x, weights them by exp(-d^2 / width^2) in
    euclidean distance d, and fits C_label linearly. Deterministic for a
    fixed cfg.seed when no generator is supplied.
    """
    classifier.check_label(label)
    k = x.num_features
    if cfg.num_samples < k + 1:
        raise ValueError("num_samples must exceed the feature count")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * math.sqrt(k)
    perturbed = x.values + cfg.perturbation_scale * rng.standard_normal((cfg.num_samples, k))
    targets = classifier.probabilities(perturbed, label)
    dist_sq = ((perturbed - x.values) ** 2).sum(axis=1)
    weights = np.exp(-dist_sq / width**2)
    coef, _ = weighted_ridge_fit(perturbed, targets, weights, cfg.l2_strength)
    return AttributionScores(coef, label, x)


@dataclass(frozen=True)
class SiloConfig:
    """Forest-neighborhood surrogate settings."""

    num_trees: int = 200
    min_samples_leaf: int = 10
    ridge_strength: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be positive")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if self.ridge_strength < 0:
            raise ValueError("ridge_strength must be non-negative")


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Axis-aligned binary tree stored as parallel node arrays.

    Internal node j splits on feature[j] at threshold[j] (left: value <=
    threshold). Leaves have feature -1 and carry the indices of every
    training sample routed to them.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_members: tuple

    def leaf_of(self, values: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            if values[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return node

    def leaves_of(self, X: np.ndarray) -> np.ndarray:
        """Vectorized routing: advance all rows one level per pass."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            rows = np.nonzero(internal)[0]
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple
    num_training_examples: int

    def neighborhood_weights(self, values: np.ndarray) -> np.ndarray:
        """Training-point weights by leaf co-occupancy.

        Per tree, the points sharing the query's leaf each get 1/leaf_size
        so the weights sum to one; the forest averages over trees.
        """
        weights = np.zeros(self.num_training_examples)
        for tree in self.trees:
            members = tree.leaf_members[tree.leaf_of(values)]
            if members.size == 0:
                raise NumericalError("empty leaf; forest construction invariant violated")
            weights[members] += 1.0 / members.size
        return weights / len(self.trees)


def _grow_tree(X: np.ndarray, y: np.ndarray, rows: np.ndarray, cfg: SiloConfig,
               rng: np.random.Generator, nodes: dict) -> int:
    """Recursive CART growth on the bootstrap rows; returns the node id."""
    node = len(nodes["feature"])
    nodes["feature"].append(-1)
    nodes["threshold"].append(0.0)
    nodes["left"].append(-1)
    nodes["right"].append(-1)

    n = len(rows)
    labels = y[rows]
    pos = labels.sum()
    if n < 2 * cfg.min_samples_leaf or pos == 0 or pos == n:
        return node

    k = X.shape[1]
    num_candidates = math.ceil(math.sqrt(k))
    candidates = rng.choice(k, size=num_candidates, replace=False)
    best = None  # (impurity, feature, threshold)
    for f in candidates:
        values = X[rows, f]
        order = np.argsort(values, kind="stable")
        v_sorted = values[order]
        prefix_pos = np.cumsum(labels[order])
        # split between positions j-1 and j; both sides need min_samples_leaf
        j = np.arange(cfg.min_samples_leaf, n - cfg.min_samples_leaf + 1)
        if j.size == 0:
            continue
        j = j[v_sorted[j - 1] < v_sorted[j]]
        if j.size == 0:
            continue
        left_pos = prefix_pos[j - 1]
        right_pos = pos - left_pos
        n_left = j.astype(np.float64)
        n_right = n - n_left
        # p(1-p) impurity; for 0/1 targets this ranks splits exactly like
        # gini or variance reduction
        impurity = left_pos * (1.0 - left_pos / n_left) + right_pos * (1.0 - right_pos / n_right)
        best_j = int(np.argmin(impurity))
        cand = (float(impurity[best_j]), int(f), 0.5 * (v_sorted[j[best_j] - 1] + v_sorted[j[best_j]]))
        if best is None or cand[0] < best[0]:
            best = cand

    if best is None:
        return node
    parent_impurity = pos * (1.0 - pos / n)
    if not best[0] < parent_impurity - 1e-12:
        return node  # no strict impurity reduction

    _, f, threshold = best
    go_left = X[rows, f] <= threshold
    nodes["feature"][node] = f
    nodes["threshold"][node] = threshold
    nodes["left"][node] = _grow_tree(X, y, rows[go_left], cfg, rng, nodes)
    nodes["right"][node] = _grow_tree(X, y, rows[~go_left], cfg, rng, nodes)
    return node


def fit_random_forest(problem: ClassificationProblem, cfg: SiloConfig = SiloConfig(),
                      rng: np.random.Generator | None = None) -> RandomForest:
    """Grow a bootstrap forest on the training labels.

    Splits maximize impurity reduction over a random subset of
    ceil(sqrt(k)) features; leaves keep at least cfg.min_samples_leaf
    bootstrap samples. After growth every original training point is
    routed through each tree and recorded on its leaf, so neighborhood
    weights are defined for the full training set. Every leaf retains at
    least one routed point because its bootstrap rows route back to it.
    """
    if not problem.is_binary:
        raise ValueError("forest growth requires a binary problem")
    n = problem.num_examples
    if n < 2 * cfg.min_samples_leaf:
        raise ValueError("need at least 2 * min_samples_leaf training examples")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    X, y = problem.X, problem.y
    trees = []
    for _ in range(cfg.num_trees):
        bootstrap = rng.integers(0, n, size=n)
        nodes = {"feature": [], "threshold": [], "left": [], "right": []}
        _grow_tree(X, y, bootstrap, cfg, rng, nodes)
        skeleton = DecisionTree(
            feature=np.array(nodes["feature"], dtype=np.int64),
            threshold=np.array(nodes["threshold"], dtype=np.float64),
            left=np.array(nodes["left"], dtype=np.int64),
            right=np.array(nodes["right"], dtype=np.int64),
            leaf_members=(),
        )
        assignments = skeleton.leaves_of(X)
        leaf_members = [np.array([], dtype=np.int64)] * len(nodes["feature"])
        for leaf in np.unique(assignments):
            leaf_members[leaf] = np.nonzero(assignments == leaf)[0]
        trees.append(DecisionTree(skeleton.feature, skeleton.threshold,
                                  skeleton.left, skeleton.right, tuple(leaf_members)))
    return RandomForest(trees=tuple(trees), num_training_examples=n)


def silo_scores(classifier: ProbabilisticClassifier, x: Instance, label,
                forest: RandomForest, training_data: ClassificationProblem,
                cfg: SiloConfig = SiloConfig()) -> AttributionScores:
    """Coefficients of a forest-weighted ridge fit of C_label.

    The forest supplies a soft neighborhood of x over the training
    points; the surrogate regresses the classifier's probabilities at
    those points on their features.
    """
    classifier.check_label(label)
    if forest.num_training_examples != training_data.num_examples:
        raise ValueError("forest was grown on a different training set")
    weights = forest.neighborhood_weights(x.values)
    targets = classifier.probabilities(training_data.X, label)
    coef, _ = weighted_ridge_fit(training_data.X, targets, weights, cfg.ridge_strength)
    return AttributionScores(coef, label, x)


@dataclass(frozen=True, eq=False)
class ShapConfig:
    """Kernel SHAP settings.

    background holds the reference rows that fill masked-out features.
    num_coalition_samples of EXACT enumerates every coalition (k <= 15
    required); None picks EXACT when k <= 15 and 2048 paired samples
    otherwise; an integer forces sampling.
    """

    background: np.ndarray
    num_coalition_samples: int | str | None = None
    seed: int = 0

    def __post_init__(self):
        bg = np.array(self.background, dtype=np.float64, copy=True)
        if bg.ndim != 2 or bg.shape[0] == 0:
            raise ValueError("background must be a non-empty 2-d array")
        bg.flags.writeable = False
        object.__setattr__(self, "background", bg)
        s = self.num_coalition_samples
        if s is not None and s != EXACT:
            if not isinstance(s, (int, np.integer)) or s < 2:
                raise ValueError("num_coalition_samples must be EXACT, None or an integer >= 2")

    def resolve_mode(self, k: int) -> tuple[bool, int]:
        """Return (exact, num_samples) for a k-feature explanation."""
        s = self.num_coalition_samples
        if s == EXACT:
            if k > 15:
                raise ValueError("exact enumeration is limited to k <= 15")
            return True, 0
        if s is None:
            if k <= 15:
                return True, 0
            return False, 2048
        return False, int(s)


def subsample_background(problem: ClassificationProblem, size: int = 100, seed: int = 0) -> np.ndarray:
    """Uniform training subsample used as the default SHAP background."""
    rng = np.random.default_rng(seed)
    n = problem.num_examples
    if n <= size:
        return problem.X.copy()
    idx = rng.choice(n, size=size, replace=False)
    return problem.X[np.sort(idx)]


def _coalition_values(classifier, x, label, masks: np.ndarray, background: np.ndarray) -> np.ndarray:
    """v(S) for each mask row: mean prediction with off-coalition features
    replaced by each background row in turn."""
    m, k = background.shape
    num = masks.shape[0]
    composite = np.empty((num * m, k))
    for i, mask in enumerate(masks):
        block = np.where(mask, x, background)
        composite[i * m:(i + 1) * m] = block
    preds = classifier.probabilities(composite, label)
    return preds.reshape(num, m).mean(axis=1)


def _solve_constrained(masks: np.ndarray, values: np.ndarray, weights: np.ndarray,
                       v_empty: float, v_full: float) -> np.ndarray:
    """Weighted regression of coalition values with both anchors enforced.

    The intercept is pinned to v(empty) and the coefficients must sum to
    v(full) - v(empty); the last coefficient is eliminated to impose the
    constraint exactly.
    """
    k = masks.shape[1]
    delta = v_full - v_empty
    if k == 1:
        return np.array([delta])
    Z = masks.astype(np.float64)
    A = Z[:, :-1] - Z[:, -1:]
    t = values - v_empty - Z[:, -1] * delta
    AtW = A.T * weights
    H = AtW @ A
    try:
        head = np.linalg.solve(H, AtW @ t)
    except np.linalg.LinAlgError:
        raise NumericalError("coalition regression is singular; add samples") from None
    return np.append(head, delta - head.sum())


def kernel_shap_scores(classifier: ProbabilisticClassifier, x: Instance, label,
                       cfg: ShapConfig, rng: np.random.Generator | None = None) -> AttributionScores:
    """Shapley-kernel regression attribution.

    The value of a coalition S is the background-averaged prediction with
    features outside S replaced by background values. Exact mode
    enumerates all coalitions with the kernel weight
    (k - 1) / (C(k, |S|) |S| (k - |S|)) and reproduces classic Shapley
    values; sampling mode draws coalitions in complement pairs with
    probability proportional to that weight. Both modes satisfy
    efficiency exactly: the scores sum to v(full) - v(empty).
    """
    classifier.check_label(label)
    k = x.num_features
    if cfg.background.shape[1] != k:
        raise ValueError("background feature count does not match the instance")
    exact, num_samples = cfg.resolve_mode(k)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    xv = x.values

    anchors = np.vstack([np.zeros(k, dtype=bool), np.ones(k, dtype=bool)])
    v_empty, v_full = _coalition_values(classifier, xv, label, anchors, cfg.background)

    if k == 1:
        phi = np.array([v_full - v_empty])
        return AttributionScores(phi, label, x)

    if exact:
        masks = []
        weights = []
        for size in range(1, k):
            w = (k - 1) / (math.comb(k, size) * size * (k - size))
            for combo in combinations(range(k), size):
                mask = np.zeros(k, dtype=bool)
                mask[list(combo)] = True
                masks.append(mask)
                weights.append(w)
        masks = np.array(masks)
        weights = np.array(weights)
    else:
        sizes = np.arange(1, k)
        size_weight = (k - 1) / (sizes * (k - sizes))
        size_prob = size_weight / size_weight.sum()
        pairs = (num_samples + 1) // 2
        masks = np.zeros((2 * pairs, k), dtype=bool)
        drawn_sizes = rng.choice(sizes, size=pairs, p=size_prob)
        for i, size in enumerate(drawn_sizes):
            chosen = rng.choice(k, size=int(size), replace=False)
            masks[2 * i, chosen] = True
            masks[2 * i + 1] = ~masks[2 * i]  # paired complement
        weights = np.ones(masks.shape[0])

    values = _coalition_values(classifier, xv, label, masks, cfg.background)
    phi = _solve_constrained(masks, values, weights, v_empty, v_full)
    return AttributionScores(phi, label, x)


def write_score_table(out, rows: list[dict], methods: list[str], include_weight: bool) -> None:
    """Write the per-feature score dump CSV.

    Columns: feature_name, weight (only for linear models), then one
    column per requested method in canonical order.
    """
    ordered = [m for m in METHOD_ORDER if m in methods]
    header = ["feature_name"] + (["weight"] if include_weight else []) + ordered
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        out_row = [row["feature_name"]]
        if include_weight:
            out_row.append(_format_score(row["weight"]))
        out_row.extend(_format_score(row[m]) for m in ordered)
        writer.writerow(out_row)


def _format_score(v: float) -> str:
    return format(float(v), ".9g")
