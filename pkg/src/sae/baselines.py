"""Softmax classifier baseline: the encoder stack plus a class output layer.

Used to compare latent-space classification against a network of the same
capacity trained directly for classification (cross-entropy on the labeled
samples only). Shares the layer conventions of the autoencoder: ReLU hidden
layers, columns are samples, seeded Glorot initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MlpSpec, _glorot


@dataclass
class SoftmaxClassifier:
    layers: list[tuple[np.ndarray, np.ndarray]]
    n_classes: int

    @property
    def dtype(self):
        return self.layers[0][0].dtype


def init_classifier(spec: MlpSpec, n_classes: int, seed: int,
                    dtype=np.float32) -> SoftmaxClassifier:
    """Encoder-shaped network with an extra (n_classes) output layer."""
    rng = np.random.default_rng(seed)
    dims = list(spec.layer_dims) + [n_classes]
    layers = [(_glorot(rng, dims[i + 1], dims[i], dtype), np.zeros(dims[i + 1], dtype=dtype))
              for i in range(len(dims) - 1)]
    return SoftmaxClassifier(layers=layers, n_classes=n_classes)


def _forward(clf: SoftmaxClassifier, X: np.ndarray) -> list[np.ndarray]:
    acts = [X]
    last = len(clf.layers) - 1
    for i, (w, b) in enumerate(clf.layers):
        a = w @ acts[-1] + b[:, None]
        acts.append(a if i == last else np.maximum(a, 0))
    return acts


def predict_proba(clf: SoftmaxClassifier, X: np.ndarray) -> np.ndarray:
    """Softmax class probabilities, (n_classes, n)."""
    logits = _forward(clf, np.asarray(X, clf.dtype))[-1]
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def predict(clf: SoftmaxClassifier, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(clf, X), axis=0)


def gradients(clf: SoftmaxClassifier, X: np.ndarray, labels: np.ndarray):
    """Exact gradients of the batch-mean cross-entropy loss."""
    X = np.asarray(X, clf.dtype)
    n = X.shape[1]
    acts = _forward(clf, X)
    probs = np.asarray(predict_proba_from_logits(acts[-1]), clf.dtype)
    onehot = np.zeros_like(probs)
    onehot[labels, np.arange(n)] = 1
    delta = (probs - onehot) * clf.dtype.type(1.0 / n)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(clf.layers)  # type: ignore
    for i in range(len(clf.layers) - 1, -1, -1):
        w, _ = clf.layers[i]
        h_prev = acts[i]
        grads[i] = (delta @ h_prev.T, delta.sum(axis=1))
        if i > 0:
            delta = (w.T @ delta) * (h_prev > 0)
    eps = np.finfo(np.float64).tiny
    loss = -float(np.mean(np.log(np.asarray(probs[labels, np.arange(n)], np.float64) + eps)))
    return grads, loss


def predict_proba_from_logits(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def train_classifier(
    clf: SoftmaxClassifier,
    X: np.ndarray,
    labels: np.ndarray,
    learning_rate: float = 0.05,
    batch_size: int = 64,
    epochs: int = 100,
    seed: int = 0,
    momentum: float = 0.0,
) -> SoftmaxClassifier:
    """Seeded mini-batch SGD on the cross-entropy loss; trains a copy."""
    clf = SoftmaxClassifier(layers=[(w.copy(), b.copy()) for w, b in clf.layers],
                            n_classes=clf.n_classes)
    X = np.asarray(X, clf.dtype)
    labels = np.asarray(labels)
    n = X.shape[1]
    lr = clf.dtype.type(learning_rate)
    mu = clf.dtype.type(momentum)
    velocity = None
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            grads, loss = gradients(clf, np.ascontiguousarray(X[:, idx]), labels[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            if momentum > 0:
                if velocity is None:
                    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in clf.layers]
                for (w, b), (vw, vb), (gw, gb) in zip(clf.layers, velocity, grads):
                    vw *= mu
                    vw -= lr * gw
                    w += vw
                    vb *= mu
                    vb -= lr * gb
                    b += vb
            else:
                for (w, b), (gw, gb) in zip(clf.layers, grads):
                    w -= lr * gw
                    b -= lr * gb
    return clf
