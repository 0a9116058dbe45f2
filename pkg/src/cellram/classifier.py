"""Classifiers under assessment.

Anything with ``predict``, ``classes`` and ``dimension`` can be assessed. Two
families ship: a one-hidden-layer ReLU network trained from scratch, and
closed-form oracle classifiers whose decision regions are known exactly
(used to check the estimators).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DivergenceError, ParseError

MODEL_FORMAT = "cellram-mlp"
MODEL_FORMAT_VERSION = 1


class Classifier:
    """Deterministic map from ``[0, 1]^d`` to a class label.

    Subclasses implement :meth:`predict` on a batch of shape ``(m, d)``.
    """

    classes: tuple[int, ...]
    dimension: int

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_one(self, x) -> int:
        return int(self.predict(np.asarray(x, dtype=np.float64)[None, :])[0])

    def _batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dimension:
            raise ArgumentError(f"expected inputs of dimension {self.dimension}, got {X.shape[1]}")
        return X


def accuracy(c: Classifier, ds) -> float:
    if ds.n == 0:
        raise ArgumentError("accuracy on an empty dataset")
    if ds.dimension != c.dimension:
        raise ArgumentError(f"classifier dimension {c.dimension} != dataset dimension {ds.dimension}")
    return float(np.mean(c.predict(ds.X) == ds.y))


# ---------------------------------------------------------------------------
# Feedforward network


class MlpClassifier(Classifier):
    """``d -> H (ReLU) -> C`` network; prediction is the argmax of the scores.

    ``np.argmax`` returns the first maximum, which gives the lowest class index
    on ties.
    """

    def __init__(self, W1, b1, W2, b2, classes):
        self.W1 = np.array(W1, dtype=np.float64)
        self.b1 = np.array(b1, dtype=np.float64)
        self.W2 = np.array(W2, dtype=np.float64)
        self.b2 = np.array(b2, dtype=np.float64)
        self.classes = tuple(int(c) for c in classes)
        d, H = self.W1.shape
        if self.b1.shape != (H,) or self.W2.shape[0] != H or self.b2.shape != (self.W2.shape[1],):
            raise ArgumentError("inconsistent weight shapes")
        if self.W2.shape[1] != len(self.classes):
            raise ArgumentError(f"{self.W2.shape[1]} output units for {len(self.classes)} classes")
        for a in (self.W1, self.b1, self.W2, self.b2):
            a.flags.writeable = False
        self.dimension = d

    @property
    def layer_sizes(self):
        return (self.W1.shape[0], self.W1.shape[1], self.W2.shape[1])

    def scores(self, X):
        X = self._batch(X)
        hidden = np.maximum(X @ self.W1 + self.b1, 0.0)
        return hidden @ self.W2 + self.b2

    def predict(self, X):
        return np.asarray(self.classes)[np.argmax(self.scores(X), axis=1)]

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def __eq__(self, other):
        if not isinstance(other, MlpClassifier):
            return NotImplemented
        return self.classes == other.classes and all(
            np.array_equal(a, b) for a, b in zip(self.params(), other.params())
        )


def _forward_backward(params, X, t):
    """Mean softmax cross-entropy and its gradients.

    ``t`` holds class positions (0..C-1), not label values.
    """
    W1, b1, W2, b2 = params
    pre = X @ W1 + b1
    hidden = np.maximum(pre, 0.0)
    z = hidden @ W2 + b2
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    m = X.shape[0]
    loss = float(np.mean(logsum - z[np.arange(m), t]))
    prob = np.exp(z - logsum[:, None])
    prob[np.arange(m), t] -= 1.0
    dz = prob / m
    gW2 = hidden.T @ dz
    gb2 = dz.sum(axis=0)
    dh = (dz @ W2.T) * (pre > 0)
    gW1 = X.T @ dh
    gb1 = dh.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2]


def _positions(classes, labels):
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[int(l)] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ArgumentError(f"label {exc.args[0]} not among classes {classes}") from None


def init_mlp(dimension, hidden, classes, seed) -> MlpClassifier:
    rng = np.random.default_rng(seed)
    C = len(classes)
    W1 = rng.standard_normal((dimension, hidden)) / math.sqrt(dimension)
    W2 = rng.standard_normal((hidden, C)) / math.sqrt(hidden)
    return MlpClassifier(W1, np.zeros(hidden), W2, np.zeros(C), classes)


def train_mlp(train, hidden=16, epochs=200, learning_rate=0.1, seed=0, batch_size=32) -> MlpClassifier:
    """Mini-batch SGD on softmax cross-entropy.

    Initialization is Gaussian with scale ``1/sqrt(fan_in)``; the shuffle order
    of every epoch is drawn from the same seeded generator, so the result is a
    pure function of the arguments.
    """
    if hidden < 2:
        raise ArgumentError(f"hidden must be >= 2, got {hidden}")
    if epochs < 1:
        raise ArgumentError(f"epochs must be >= 1, got {epochs}")
    if not learning_rate > 0:
        raise ArgumentError(f"learning_rate must be > 0, got {learning_rate}")
    if batch_size < 1:
        raise ArgumentError(f"batch_size must be >= 1, got {batch_size}")
    classes = train.classes
    init = init_mlp(train.dimension, hidden, classes, seed)
    params = [p.copy() for p in init.params()]
    t = _positions(classes, train.y)
    X = train.X
    rng = np.random.default_rng([seed, 1])
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, epochs + 1):
            order = rng.permutation(train.n)
            total = 0.0
            for start in range(0, train.n, batch_size):
                idx = order[start:start + batch_size]
                loss, grads = _forward_backward(params, X[idx], t[idx])
                if not math.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                total += loss * len(idx)
                for p, g in zip(params, grads):
                    p -= learning_rate * g
            if not math.isfinite(total) or not all(np.all(np.isfinite(p)) for p in params):
                raise DivergenceError(epoch, total / train.n)
    return MlpClassifier(*params, classes)


def gradient_check(m: MlpClassifier, x, tolerance, label=None, n_weights=64, seed=0) -> bool:
    """Compare backprop gradients with central differences at a single input.

    The loss is cross-entropy against ``label`` (default: the predicted
    label). A random subset of at least 50 weights is probed with step 1e-5.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if label is None:
        label = m.predict_one(x[0])
    t = _positions(m.classes, [label])
    params = [p.copy() for p in m.params()]
    _, grads = _forward_backward(params, x, t)

    slots = [(k, i) for k, p in enumerate(params) for i in range(p.size)]
    rng = np.random.default_rng(seed)
    n_probe = min(len(slots), max(50, n_weights))
    chosen = rng.choice(len(slots), size=n_probe, replace=False)
    step = 1e-5
    worst = 0.0
    for s in chosen:
        k, i = slots[s]
        flat = params[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        up, _ = _forward_backward(params, x, t)
        flat[i] = orig - step
        down, _ = _forward_backward(params, x, t)
        flat[i] = orig
        numeric = (up - down) / (2 * step)
        analytic = grads[k].reshape(-1)[i]
        scale = max(abs(numeric) + abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst < tolerance


def save_model(m: MlpClassifier, path) -> None:
    """Plain-text model file: a header, the layer sizes, the classes, then
    each parameter array on its own line with 17 significant digits."""
    d, H, C = m.layer_sizes
    lines = [
        f"{MODEL_FORMAT} {MODEL_FORMAT_VERSION}",
        f"{d} {H} {C}",
        " ".join(str(c) for c in m.classes),
    ]
    for p in m.params():
        lines.append(" ".join(f"{v:.17g}" for v in p.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> MlpClassifier:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 7:
        raise ParseError(f"{path}: truncated model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_FORMAT:
        raise ParseError(f"{path}: not a {MODEL_FORMAT} file", 1)
    if int(head[1]) != MODEL_FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported model version {head[1]}", 1)
    d, H, C = (int(v) for v in lines[1].split())
    classes = [int(v) for v in lines[2].split()]
    shapes = [(d, H), (H,), (H, C), (C,)]
    arrays = []
    for lineno, shape in enumerate(shapes, start=4):
        values = np.array([float(v) for v in lines[lineno - 1].split()])
        if values.size != math.prod(shape):
            raise ParseError(f"{path}: expected {math.prod(shape)} values", lineno)
        arrays.append(values.reshape(shape))
    return MlpClassifier(*arrays, classes)


# ---------------------------------------------------------------------------
# Oracle classifiers


@dataclass(frozen=True)
class HalfPlane(Classifier):
    """``positive`` where ``normal . x > offset``, else ``negative``."""

    normal: tuple[float, ...]
    offset: float
    negative: int = 0
    positive: int = 1

    @property
    def dimension(self):
        return len(self.normal)

    @property
    def classes(self):
        return tuple(sorted({self.negative, self.positive}))

    def predict(self, X):
        X = self._batch(X)
        return np.where(X @ np.asarray(self.normal, dtype=np.float64) > self.offset,
                        self.positive, self.negative)


@dataclass(frozen=True)
class Checkerboard(Classifier):
    """Parity of the per-axis cell index on a ``k``-per-axis board."""

    k: int
    dim: int = 2

    @property
    def dimension(self):
        return self.dim

    @property
    def classes(self):
        return (0, 1)

    def predict(self, X):
        X = self._batch(X)
        idx = np.minimum(np.floor(X * self.k).astype(np.int64), self.k - 1)
        return idx.sum(axis=1) % 2


@dataclass(frozen=True)
class Constant(Classifier):
    label: int
    all_classes: tuple[int, ...] = (0, 1)
    dim: int = 2

    @property
    def dimension(self):
        return self.dim

    @property
    def classes(self):
        return tuple(sorted(set(self.all_classes) | {self.label}))

    def predict(self, X):
        X = self._batch(X)
        return np.full(X.shape[0], self.label, dtype=np.int64)


@dataclass(frozen=True)
class NoisyRegion(Classifier):
    """``base`` everywhere except the closed box ``[lower, upper]``, where it
    answers ``flipped``."""

    base: Classifier
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    flipped: int

    @property
    def dimension(self):
        return self.base.dimension

    @property
    def classes(self):
        return tuple(sorted(set(self.base.classes) | {self.flipped}))

    def predict(self, X):
        X = self._batch(X)
        inside = np.all((X >= np.asarray(self.lower)) & (X <= np.asarray(self.upper)), axis=1)
        return np.where(inside, self.flipped, self.base.predict(X))


def oracle_from_spec(spec: dict, dimension: int = 2) -> Classifier:
    """Build an oracle from a config mapping such as ``{"type": "constant", "label": 0}``."""
    kind = spec.get("type")
    if kind == "halfplane":
        return HalfPlane(tuple(spec["normal"]), float(spec["offset"]),
                         int(spec.get("negative", 0)), int(spec.get("positive", 1)))
    if kind == "checkerboard":
        return Checkerboard(int(spec["k"]), dimension)
    if kind == "constant":
        return Constant(int(spec["label"]), tuple(spec.get("classes", (0, 1))), dimension)
    if kind == "noisy_region":
        return NoisyRegion(oracle_from_spec(spec["base"], dimension), tuple(spec["lower"]),
                           tuple(spec["upper"]), int(spec["label"]))
    raise ArgumentError(f"unknown oracle type {kind!r}")
