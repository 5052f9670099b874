"""Synthetic vector datasets for experiments and tests.

The hidden-structure generator embeds a weak two-class signal orthogonally to
a few dominant variance factors, so an unsupervised code of the data carries
almost no class information while the classes stay perfectly learnable.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset


def _dataset_from_arrays(features: np.ndarray, labels: np.ndarray, n_classes: int,
                         class_names: tuple[str, ...] | None = None) -> Dataset:
    n = features.shape[0]
    labels = labels.astype(np.int64)
    return Dataset(
        features=features,
        raw_labels=labels.copy(),
        superclass=labels.copy(),
        n_classes=n_classes,
        labeled_ids=np.arange(n, dtype=np.int64),
        unlabeled_ids=np.empty(0, dtype=np.int64),
        kind="vector",
        class_names=class_names or tuple(str(c) for c in range(n_classes)),
    )


def hidden_structure_dataset(
    n: int,
    dim: int = 20,
    seed: int = 0,
    class_coord: float = 0.75,
    factor_scales: tuple[float, ...] = (3.0, 2.0),
    noise: float = 0.1,
    ambiguity: float = 0.0,
) -> Dataset:
    """Two classes whose separating direction is orthogonal to the dominant factors.

    Samples are built as strong shared factors plus a small class-coordinate
    along an orthogonal axis (+/- ``class_coord``) plus isotropic noise.
    ``ambiguity`` adds jitter to the class coordinate so some samples sit on
    the wrong side of the boundary.
    """
    if dim < len(factor_scales) + 1:
        raise ValueError("dim too small for the requested factors")
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((dim, len(factor_scales) + 1)))[0]
    labels = rng.integers(0, 2, size=n)
    factors = rng.standard_normal((n, len(factor_scales))) * np.asarray(factor_scales)
    coord = np.where(labels == 1, class_coord, -class_coord)
    if ambiguity > 0:
        coord = coord + ambiguity * rng.standard_normal(n)
    features = (factors @ basis[:, :-1].T
                + coord[:, None] * basis[:, -1]
                + noise * rng.standard_normal((n, dim)))
    return _dataset_from_arrays(features, labels, n_classes=2, class_names=("neg", "pos"))


def gaussian_blobs(
    n: int,
    n_classes: int,
    dim: int,
    separation: float = 4.0,
    spread: float = 0.5,
    seed: int = 0,
) -> Dataset:
    """Isotropic Gaussian clusters on seeded random centers, balanced classes."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, dim))
    centers *= separation / max(np.linalg.norm(centers, axis=1).min(), 1e-9)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    features = centers[labels] + spread * rng.standard_normal((n, dim))
    return _dataset_from_arrays(features, labels, n_classes=n_classes)
