"""Trainable differentiable classifiers.

Two model families are provided: L2-regularized logistic regression trained
by full-batch gradient descent with backtracking, and a small fully
connected network with a sigmoid output trained by mini-batch SGD with
momentum. Both expose analytic input gradients; a symmetric finite
difference quotient serves as fallback and as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .core import (
    AttributionScores,
    ClassificationProblem,
    Instance,
    NumericalError,
    ProbabilisticClassifier,
    _frozen_array,
)

__all__ = [
    "TrainConfig",
    "LogisticRegressionModel",
    "MLPModel",
    "FunctionClassifier",
    "train_logistic_regression",
    "lr_gradient",
    "train_mlp",
    "mlp_gradient",
    "finite_diff_gradient",
    "sigmoid_prime",
]

HIDDEN_ACTIVATIONS = ("relu", "tanh", "logistic")

# epochs without a loss improvement of at least cfg.tolerance before
# the network trainer stops
PLATEAU_PATIENCE = 10


def sigmoid_prime(z):
    s = expit(z)
    return s * (1.0 - s)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by both trainers.

    learning_rate is the initial trial step for the logistic trainer
    (backtracking shrinks it as needed) and the fixed step for the
    network trainer. tolerance is the logistic trainer's gradient-norm
    stopping threshold; the network trainer reads it as the minimum
    per-epoch loss improvement before the plateau counter starts.
    """

    max_iterations: int = 500
    learning_rate: float = 1.0
    l2_strength: float = 1.0
    seed: int = 0
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be non-negative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


class LogisticRegressionModel(ProbabilisticClassifier):
    """phi(w . x + b) as the positive-class probability."""

    def __init__(self, weights, bias: float, label_order: tuple = ("0", "1")):
        self.weights = _frozen_array(weights, ndim=1)
        self.bias = float(bias)
        self.label_order = tuple(label_order)
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")
        if len(self.label_order) != 2:
            raise ValueError("binary label order required")

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    def decision(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=np.float64)) + self.bias)

    def positive_probability(self, values: np.ndarray) -> float:
        return float(expit(self.decision(values)))

    def positive_probabilities(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return expit(X @ self.weights + self.bias)

    @property
    def differentiable(self) -> bool:
        return True

    def gradient(self, values: np.ndarray, label) -> np.ndarray:
        self.check_label(label)
        g = lr_gradient(self, np.asarray(values, dtype=np.float64))
        return g if label == self.label_order[1] else -g


def lr_gradient(model: LogisticRegressionModel, values: np.ndarray) -> np.ndarray:
    """Exact positive-class gradient: component i is w_i * phi'(w . x + b).

    The ratio gradient_i / w_i is therefore the same scalar phi'(z) for
    every feature, which pins the gradient ranking to the weight ranking.
    """
    if isinstance(values, Instance):
        values = values.values
    z = model.decision(values)
    return model.weights * sigmoid_prime(z)


def _binary_targets(problem: ClassificationProblem) -> np.ndarray:
    if not problem.is_binary:
        raise ValueError("trainer requires a binary problem")
    if problem.num_examples == 0:
        raise ValueError("empty training set")
    return problem.y.astype(np.float64)


def _log_loss_terms(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # -log p for y=1 and -log(1-p) for y=0, computed without overflow
    return np.logaddexp(0.0, z) - y * z


def train_logistic_regression(problem: ClassificationProblem, cfg: TrainConfig = TrainConfig()) -> LogisticRegressionModel:
    """Fit by full-batch gradient descent with Armijo backtracking.

    Objective: sum of per-example log losses plus (l2_strength / 2) ||w||^2,
    bias unpenalized. Stops when the gradient 2-norm falls below
    cfg.tolerance or after cfg.max_iterations steps. Deterministic: the
    start point is the zero vector regardless of cfg.seed.
    """
    y = _binary_targets(problem)
    X = problem.X
    n, k = X.shape
    w = np.zeros(k)
    b = 0.0

    def objective(w, b):
        z = X @ w + b
        return float(_log_loss_terms(z, y).sum() + 0.5 * cfg.l2_strength * np.dot(w, w))

    loss = objective(w, b)
    step = cfg.learning_rate
    for _ in range(cfg.max_iterations):
        p = expit(X @ w + b)
        residual = p - y
        grad_w = X.T @ residual + cfg.l2_strength * w
        grad_b = float(residual.sum())
        grad_norm_sq = float(np.dot(grad_w, grad_w) + grad_b * grad_b)
        if grad_norm_sq <= cfg.tolerance**2:
            break
        # backtracking line search, sufficient-decrease constant 1e-4
        step = min(step * 2.0, 1e12)
        while True:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            loss_new = objective(w_new, b_new)
            if np.isfinite(loss_new) and loss_new <= loss - 1e-4 * step * grad_norm_sq:
                break
            step *= 0.5
            if step < 1e-20:
                raise NumericalError("line search failed to find a descent step")
        w, b, loss = w_new, b_new, loss_new
    if not np.isfinite(loss):
        raise NumericalError("training diverged to a non-finite loss")
    return LogisticRegressionModel(w, b, tuple(problem.labels))


class MLPModel(ProbabilisticClassifier):
    """Fully connected network with a single sigmoid output unit.

    layers holds (W, b) pairs; W has shape (fan_in, fan_out). The hidden
    activation applies to every layer except the last, which feeds the
    output sigmoid.
    """

    def __init__(self, layers, hidden_activation: str = "relu",
                 label_order: tuple = ("0", "1"), final_train_loss: float | None = None):
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        frozen = []
        for W, b in layers:
            frozen.append((_frozen_array(W, ndim=2), _frozen_array(b, ndim=1)))
        if not frozen:
            raise ValueError("at least the output layer is required")
        for (W, b) in frozen:
            if W.shape[1] != b.shape[0]:
                raise ValueError("bias length must match layer width")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("model parameters must be finite")
        for (W_prev, _), (W_next, _) in zip(frozen, frozen[1:]):
            if W_prev.shape[1] != W_next.shape[0]:
                raise ValueError("consecutive layer shapes do not chain")
        if frozen[-1][0].shape[1] != 1:
            raise ValueError("output layer must have a single unit")
        self.layers = tuple(frozen)
        self.hidden_activation = hidden_activation
        self.label_order = tuple(label_order)
        self.final_train_loss = final_train_loss

    @property
    def num_features(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(W.shape[1] for W, _ in self.layers[:-1])

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.hidden_activation == "relu":
            return np.maximum(z, 0.0)
        if self.hidden_activation == "tanh":
            return np.tanh(z)
        return expit(z)

    def _activate_prime(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        # derivative written in terms of pre-activation z and activation a
        if self.hidden_activation == "relu":
            return (z > 0.0).astype(np.float64)  # exactly 0 at the kink
        if self.hidden_activation == "tanh":
            return 1.0 - a * a
        return a * (1.0 - a)

    def _forward(self, X: np.ndarray):
        """Return pre-activations and activations for every layer."""
        pre, act = [], [X]
        h = X
        for idx, (W, b) in enumerate(self.layers):
            z = h @ W + b
            pre.append(z)
            h = expit(z) if idx == len(self.layers) - 1 else self._activate(z)
            act.append(h)
        return pre, act

    def positive_probability(self, values: np.ndarray) -> float:
        X = np.asarray(values, dtype=np.float64).reshape(1, -1)
        return float(self._forward(X)[1][-1][0, 0])

    def positive_probabilities(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return self._forward(X)[1][-1][:, 0]

    @property
    def differentiable(self) -> bool:
        return True

    def gradient(self, values: np.ndarray, label) -> np.ndarray:
        self.check_label(label)
        g = mlp_gradient(self, np.asarray(values, dtype=np.float64))
        return g if label == self.label_order[1] else -g


def mlp_gradient(model: MLPModel, values: np.ndarray) -> np.ndarray:
    """Positive-class input gradient by reverse-mode accumulation."""
    if isinstance(values, Instance):
        values = values.values
    X = np.asarray(values, dtype=np.float64).reshape(1, -1)
    pre, act = model._forward(X)
    # output layer: dP/dz_out = sigma'(z_out)
    delta = sigmoid_prime(pre[-1])
    for idx in range(len(model.layers) - 1, -1, -1):
        W, _ = model.layers[idx]
        delta = delta @ W.T
        if idx > 0:
            delta = delta * model._activate_prime(pre[idx - 1], act[idx])
    return delta[0]


def train_mlp(problem: ClassificationProblem, architecture: Sequence[int] = (8, 8, 8, 8, 8),
              cfg: TrainConfig = TrainConfig(max_iterations=1000, learning_rate=0.01,
                                             l2_strength=1e-4, tolerance=1e-4),
              hidden_activation: str = "relu",
              batch_size: int = 32, momentum: float = 0.9) -> MLPModel:
    """Train by mini-batch SGD with momentum.

    One iteration is one epoch over a fresh shuffle of the training set.
    The loss is the batch-mean log loss plus an L2 penalty scaled by the
    training-set size, so l2_strength is comparable across dataset sizes.
    Training stops early once the full-set log loss has failed to improve
    by more than cfg.tolerance for PLATEAU_PATIENCE consecutive epochs;
    without that, long runs interpolate the training set and the model
    surface turns needlessly jagged. Identical (data, architecture, cfg)
    reproduce bit-identical parameters.
    """
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
    y = _binary_targets(problem)
    X = problem.X
    n, k = X.shape
    sizes = [k, *map(int, architecture), 1]
    if any(s < 1 for s in sizes):
        raise ValueError("layer widths must be positive")
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    vel_w = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    activation = hidden_activation

    def forward_train(Xb):
        pre, act = [], [Xb]
        h = Xb
        for idx, (W, b) in enumerate(zip(weights, biases)):
            z = h @ W + b
            pre.append(z)
            if idx == len(weights) - 1:
                h = expit(z)
            elif activation == "relu":
                h = np.maximum(z, 0.0)
            elif activation == "tanh":
                h = np.tanh(z)
            else:
                h = expit(z)
            act.append(h)
        return pre, act

    def act_prime(z, a):
        if activation == "relu":
            return (z > 0.0).astype(np.float64)
        if activation == "tanh":
            return 1.0 - a * a
        return a * (1.0 - a)

    best_loss = np.inf
    stalled = 0
    final_loss = np.inf
    for _ in range(cfg.max_iterations):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            Xb, yb = X[idx], y[idx]
            m = len(idx)
            pre, act = forward_train(Xb)
            p = act[-1][:, 0]
            delta = ((p - yb) / m).reshape(-1, 1)  # sigmoid + log loss
            for layer in range(len(weights) - 1, -1, -1):
                grad_W = act[layer].T @ delta + (cfg.l2_strength / n) * weights[layer]
                grad_b = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ weights[layer].T) * act_prime(pre[layer - 1], act[layer])
                vel_w[layer] = momentum * vel_w[layer] - cfg.learning_rate * grad_W
                vel_b[layer] = momentum * vel_b[layer] - cfg.learning_rate * grad_b
                weights[layer] = weights[layer] + vel_w[layer]
                biases[layer] = biases[layer] + vel_b[layer]
        if not all(np.all(np.isfinite(W)) for W in weights):
            raise NumericalError("training diverged to non-finite parameters")
        _, act = forward_train(X)
        p = np.clip(act[-1][:, 0], 1e-12, 1.0 - 1e-12)
        final_loss = float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())
        if not np.isfinite(final_loss):
            raise NumericalError("training diverged to a non-finite loss")
        if final_loss > best_loss - cfg.tolerance:
            stalled += 1
            if stalled >= PLATEAU_PATIENCE:
                break
        else:
            stalled = 0
        if final_loss < best_loss:
            best_loss = final_loss
    model = MLPModel(list(zip(weights, biases)), hidden_activation=activation,
                     label_order=tuple(problem.labels), final_train_loss=final_loss)
    return model


class FunctionClassifier(ProbabilisticClassifier):
    """Wraps an arbitrary callable p(x) in [0, 1] as a binary classifier.

    Useful for hand-built witnesses in tests and probes. Supply
    gradient_fn to make it differentiable and batch_fn for a vectorized
    evaluation path.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], num_features: int,
                 gradient_fn: Callable[[np.ndarray], np.ndarray] | None = None,
                 batch_fn: Callable[[np.ndarray], np.ndarray] | None = None,
                 label_order: tuple = ("0", "1")):
        self._fn = fn
        self._k = int(num_features)
        self._gradient_fn = gradient_fn
        self._batch_fn = batch_fn
        self.label_order = tuple(label_order)

    @property
    def num_features(self) -> int:
        return self._k

    def positive_probability(self, values: np.ndarray) -> float:
        return float(self._fn(np.asarray(values, dtype=np.float64)))

    def positive_probabilities(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self._batch_fn is not None:
            return np.asarray(self._batch_fn(X), dtype=np.float64)
        return np.array([self._fn(row) for row in X])

    @property
    def differentiable(self) -> bool:
        return self._gradient_fn is not None

    def gradient(self, values: np.ndarray, label) -> np.ndarray:
        if self._gradient_fn is None:
            raise NotImplementedError("classifier has no analytic gradient")
        self.check_label(label)
        g = np.asarray(self._gradient_fn(np.asarray(values, dtype=np.float64)), dtype=np.float64)
        return g if label == self.label_order[1] else -g


def finite_diff_gradient(classifier: ProbabilisticClassifier, values: np.ndarray, label,
                         epsilon: float = 1e-5) -> np.ndarray:
    """Symmetric difference quotient per coordinate, 2k evaluations.

    (C_l(x + eps e_i) - C_l(x - eps e_i)) / (2 eps) for each feature i.
    """
    if isinstance(values, Instance):
        values = values.values
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(values, dtype=np.float64)
    k = x.shape[0]
    if k != classifier.num_features:
        raise ValueError("dimension mismatch")
    probes = np.repeat(x.reshape(1, -1), 2 * k, axis=0)
    for i in range(k):
        probes[2 * i, i] += epsilon
        probes[2 * i + 1, i] -= epsilon
    vals = classifier.probabilities(probes, label)
    return (vals[0::2] - vals[1::2]) / (2.0 * epsilon)
