"""Linear max-margin classification on the latent space.

One binary classifier per unordered class pair, trained by the Pegasos
stochastic subgradient scheme (step size 1/(lambda*t), unregularized bias).
Decision values are oriented positive toward the higher class index. Raw
scores are normalized per pair by scaling linearly so the two class centers
land on 0 and 1, then clamping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_LAMBDA = 1e-3
DEFAULT_EPOCHS = 50


class FitError(ValueError):
    """Raised when a model cannot be fitted (e.g. single class)."""


class ScoringError(ValueError):
    """Raised when score normalization is degenerate for a pair."""


@dataclass(frozen=True)
class PairClassifier:
    w: np.ndarray
    b: float


@dataclass(frozen=True)
class SvmModel:
    pairs: dict[tuple[int, int], PairClassifier]
    class_centers: dict[int, np.ndarray]
    lam: float

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_centers)

    def pairs_of(self, c: int) -> list[tuple[int, int]]:
        return [p for p in self.pairs if c in p]


@dataclass(frozen=True)
class CalibrationBin:
    score_lo: float
    score_hi: float
    count: int
    precision: float | None


def _pegasos_pair(z: np.ndarray, y: np.ndarray, lam: float, epochs: int,
                  rng: np.random.Generator) -> PairClassifier:
    # Bias as an augmented constant coordinate: the 1/(lam*t) step is far too
    # hot for an unregularized intercept (its first step is 1/lam), while the
    # augmented form keeps the usual Pegasos averaging behavior.
    m, n = z.shape
    aug = np.vstack([z, np.ones((1, n))])
    w = np.zeros(m + 1)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            if y[i] * (w @ aug[:, i]) < 1.0:
                w = (1.0 - eta * lam) * w + (eta * y[i]) * aug[:, i]
            else:
                w = (1.0 - eta * lam) * w
    return PairClassifier(w=w[:m], b=float(w[m]))


def svm_fit(latents: np.ndarray, labels: np.ndarray, lam: float = DEFAULT_LAMBDA,
            epochs: int = DEFAULT_EPOCHS, seed: int = 0) -> SvmModel:
    """Fit one-vs-one linear classifiers plus class centers on (m, n) latents."""
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if latents.ndim != 2 or labels.shape != (latents.shape[1],):
        raise ValueError("latents must be (m, n) with one label per column")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    classes = sorted(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise FitError(f"need at least two classes, got {classes}")

    centers = {c: latents[:, labels == c].mean(axis=1) for c in classes}
    pairs: dict[tuple[int, int], PairClassifier] = {}
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            a, b = classes[ai], classes[bi]
            sel = (labels == a) | (labels == b)
            z = latents[:, sel]
            y = np.where(labels[sel] == b, 1.0, -1.0)
            rng = np.random.default_rng([seed, a, b])
            pairs[(a, b)] = _pegasos_pair(z, y, lam, epochs, rng)
    return SvmModel(pairs=pairs, class_centers=centers, lam=lam)


def pair_objective(model: SvmModel, pair: tuple[int, int],
                   latents: np.ndarray, labels: np.ndarray) -> float:
    """Regularized hinge objective lambda/2*||w||^2 + mean hinge for one pair."""
    a, b = pair
    clf = model.pairs[pair]
    sel = (labels == a) | (labels == b)
    z = latents[:, sel]
    y = np.where(labels[sel] == b, 1.0, -1.0)
    margins = y * (clf.w @ z + clf.b)
    return 0.5 * model.lam * float(clf.w @ clf.w) + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def decision_value(model: SvmModel, pair: tuple[int, int], z: np.ndarray) -> float:
    """Signed distance surrogate w.z + b; positive means the higher-index class."""
    if pair not in model.pairs:
        raise KeyError(f"unknown class pair {pair}")
    clf = model.pairs[pair]
    return float(clf.w @ np.asarray(z, np.float64) + clf.b)


def predict(model: SvmModel, z: np.ndarray) -> int:
    """One-vs-one majority vote.

    Vote ties are broken by the larger sum of |decision value| over the pairs
    each tied class won, then by the lower class index.
    """
    votes: dict[int, int] = {c: 0 for c in model.classes}
    strength: dict[int, float] = {c: 0.0 for c in model.classes}
    for (a, b), _ in model.pairs.items():
        f = decision_value(model, (a, b), z)
        winner = b if f > 0 else a
        votes[winner] += 1
        strength[winner] += abs(f)
    best = max(votes.values())
    tied = [c for c, v in votes.items() if v == best]
    if len(tied) == 1:
        return tied[0]
    best_strength = max(strength[c] for c in tied)
    return min(c for c in tied if strength[c] == best_strength)


def normalized_score(model: SvmModel, pair: tuple[int, int], z: np.ndarray) -> float:
    """Decision value rescaled so the pair's class centers map to 0 and 1, clamped."""
    a, b = pair
    f_z = decision_value(model, pair, z)
    f_a = decision_value(model, pair, model.class_centers[a])
    f_b = decision_value(model, pair, model.class_centers[b])
    span = f_b - f_a
    if span == 0.0:
        raise ScoringError(f"pair {pair} has coincident center scores")
    s = (f_z - f_a) / span
    return float(min(1.0, max(0.0, s)))


def per_class_scores(model: SvmModel, z: np.ndarray) -> dict[int, float]:
    """Best normalized score each class attains over the pairs it belongs to."""
    scores: dict[int, float] = {}
    for c in model.classes:
        best = 0.0
        for (a, b) in model.pairs_of(c):
            s = normalized_score(model, (a, b), z)
            best = max(best, s if c == b else 1.0 - s)
        scores[c] = best
    return scores


def calibration_curve(scores, truths, n_bins: int) -> list[CalibrationBin]:
    """Equal-width bins over [0, 1] with the fraction of positives per bin."""
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths)
    if scores.shape != truths.shape:
        raise ValueError("scores and truths must have equal length")
    if scores.size == 0:
        raise ValueError("empty input")
    if n_bins < 2:
        raise ValueError("need at least two bins")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    which = np.clip(np.digitize(scores, edges[1:-1], right=False), 0, n_bins - 1)
    bins = []
    for k in range(n_bins):
        sel = which == k
        count = int(sel.sum())
        precision = float(np.mean(truths[sel])) if count else None
        bins.append(CalibrationBin(score_lo=float(edges[k]), score_hi=float(edges[k + 1]),
                                   count=count, precision=precision))
    return bins


def score_histogram(scores, n_bins: int) -> np.ndarray:
    """Counts of scores per equal-width bin over [0, 1]."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return np.zeros(n_bins, dtype=np.int64)
    counts, _ = np.histogram(scores, bins=n_bins, range=(0.0, 1.0))
    return counts.astype(np.int64)
