"""Self-contained classifiers for train-on-synthetic utility scoring.

Three deterministic built-ins: multinomial logistic regression (full-batch
gradient descent from zero init), a CART-style decision tree (Gini, bounded
depth), and a one-hidden-layer MLP (seeded init, full-batch Adam). They all
consume dense float feature matrices and integer class labels.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class LogisticRegressionGD:
    """Softmax regression trained by plain gradient descent.

    Zero initialization makes training deterministic without a seed.
    """

    def __init__(self, lr: float = 0.5, iters: int = 400, l2: float = 1e-4):
        self.lr = lr
        self.iters = iters
        self.l2 = l2
        self.coef = None

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "LogisticRegressionGD":
        Xb = np.hstack([X, np.ones((X.shape[0], 1))])
        n, d = Xb.shape
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        W = np.zeros((d, n_classes))
        for _ in range(self.iters):
            probs = _softmax(Xb @ W)
            grad = Xb.T @ (probs - onehot) / n + self.l2 * W
            W -= self.lr * grad
        self.coef = W
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xb = np.hstack([X, np.ones((X.shape[0], 1))])
        return np.argmax(Xb @ self.coef, axis=1)


class DecisionTreeGini:
    """CART classifier: best Gini split per node, depth-bounded.

    Ties prefer the earliest feature and the lowest threshold, so fitting is
    deterministic. Thresholds are midpoints between consecutive distinct
    sorted feature values.
    """

    def __init__(self, max_depth: int = 8, min_samples_split: int = 2):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.tree = None
        self.n_classes = None

    @staticmethod
    def _gini_from_counts(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            p = counts / totals[:, None]
        g = 1.0 - np.nansum(p * p, axis=1)
        g[totals == 0] = 0.0
        return g

    def _best_split(self, X: np.ndarray, y: np.ndarray):
        n, n_feat = X.shape
        parent_counts = np.bincount(y, minlength=self.n_classes)
        parent_gini = 1.0 - np.sum((parent_counts / n) ** 2)
        best = None  # (weighted_gini, feature, threshold)
        for f in range(n_feat):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            ys = y[order]
            cut = np.flatnonzero(xs[:-1] < xs[1:])
            if cut.size == 0:
                continue
            onehot = np.zeros((n, self.n_classes))
            onehot[np.arange(n), ys] = 1.0
            cum = np.cumsum(onehot, axis=0)
            left = cum[cut]
            right = parent_counts[None, :] - left
            n_left = (cut + 1).astype(np.float64)
            n_right = n - n_left
            g_left = self._gini_from_counts(left, n_left)
            g_right = self._gini_from_counts(right, n_right)
            weighted = (n_left * g_left + n_right * g_right) / n
            k = int(np.argmin(weighted))
            if best is None or weighted[k] < best[0] - 1e-15:
                best = (float(weighted[k]), f, float((xs[cut[k]] + xs[cut[k] + 1]) / 2.0))
        if best is None or parent_gini - best[0] <= 1e-12:
            return None
        return best[1], best[2]

    def _build(self, X: np.ndarray, y: np.ndarray, depth: int):
        counts = np.bincount(y, minlength=self.n_classes)
        majority = int(np.argmax(counts))
        if (depth >= self.max_depth or y.size < self.min_samples_split
                or np.count_nonzero(counts) == 1):
            return ("leaf", majority)
        split = self._best_split(X, y)
        if split is None:
            return ("leaf", majority)
        feature, threshold = split
        mask = X[:, feature] <= threshold
        left = self._build(X[mask], y[mask], depth + 1)
        right = self._build(X[~mask], y[~mask], depth + 1)
        return ("node", feature, threshold, left, right)

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "DecisionTreeGini":
        self.n_classes = n_classes
        self.tree = self._build(np.asarray(X, dtype=np.float64),
                                np.asarray(y, dtype=np.int64), 0)
        return self

    def _predict_one(self, x: np.ndarray) -> int:
        node = self.tree
        while node[0] == "node":
            _, feature, threshold, left, right = node
            node = left if x[feature] <= threshold else right
        return node[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self._predict_one(row) for row in np.asarray(X)],
                        dtype=np.int64)


class MlpClassifierAdam:
    """One hidden ReLU layer (width 64), softmax output, full-batch Adam."""

    def __init__(self, hidden: int = 64, iters: int = 300, lr: float = 1e-2,
                 seed: int = 0):
        self.hidden = hidden
        self.iters = iters
        self.lr = lr
        self.seed = seed
        self.params = None

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "MlpClassifierAdam":
        rng = np.random.default_rng(self.seed)
        n, d = X.shape
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        w1 = rng.uniform(-1.0, 1.0, size=(d, self.hidden)) * np.sqrt(6.0 / d)
        b1 = np.zeros(self.hidden)
        w2 = rng.uniform(-1.0, 1.0, size=(self.hidden, n_classes)) * np.sqrt(6.0 / self.hidden)
        b2 = np.zeros(n_classes)
        ms = [np.zeros_like(p) for p in (w1, b1, w2, b2)]
        vs = [np.zeros_like(p) for p in (w1, b1, w2, b2)]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        for step in range(1, self.iters + 1):
            z1 = X @ w1 + b1
            h1 = np.maximum(z1, 0.0)
            probs = _softmax(h1 @ w2 + b2)
            d_logits = (probs - onehot) / n
            g_w2 = h1.T @ d_logits
            g_b2 = d_logits.sum(axis=0)
            d_h1 = (d_logits @ w2.T) * (z1 > 0)
            g_w1 = X.T @ d_h1
            g_b1 = d_h1.sum(axis=0)
            params = [w1, b1, w2, b2]
            grads = [g_w1, g_b1, g_w2, g_b2]
            for k in range(4):
                ms[k] = beta1 * ms[k] + (1 - beta1) * grads[k]
                vs[k] = beta2 * vs[k] + (1 - beta2) * grads[k] ** 2
                m_hat = ms[k] / (1 - beta1 ** step)
                v_hat = vs[k] / (1 - beta2 ** step)
                params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + eps)
            w1, b1, w2, b2 = params
        self.params = (w1, b1, w2, b2)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self.params
        h1 = np.maximum(X @ w1 + b1, 0.0)
        return np.argmax(h1 @ w2 + b2, axis=1)


def builtin_classifiers(seed: int = 0) -> list:
    """(name, fresh model) pairs for the utility evaluator."""
    return [
        ("logistic_regression", LogisticRegressionGD()),
        ("decision_tree", DecisionTreeGini()),
        ("mlp", MlpClassifierAdam(seed=seed)),
    ]


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValidationError("prediction/label shape mismatch")
    return float(np.mean(y_true == y_pred))
