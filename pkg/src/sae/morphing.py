"""Class transitions: decode latent codes shifted between class centers.

The deformation vector points from one class center to another; adding a
scaled copy to a sample's latent code and decoding yields a gradual transition
toward the target class. The latent shift happens in the model's dtype, so a
zero-scale morph reproduces the plain reconstruction bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SaeModel, decode, encode
from .svm import SvmModel, normalized_score


@dataclass(frozen=True)
class MorphTrack:
    source_id: int
    pair: tuple[int, int]
    alphas: tuple[float, ...]
    outputs: np.ndarray  # (dim, n_steps)
    scores: tuple[float, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise ValueError("alphas must be strictly increasing")


def class_centers(latents: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-class mean of the latent columns, rows indexed by class."""
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if latents.ndim != 2 or labels.shape != (latents.shape[1],):
        raise ValueError("latents must be (m, n) with one label per column")
    k = int(labels.max()) + 1
    centers = np.empty((k, latents.shape[0]))
    for c in range(k):
        sel = labels == c
        if not sel.any():
            raise ValueError(f"class {c} has no samples")
        centers[c] = latents[:, sel].mean(axis=1)
    return centers


def deformation_vector(c_from: np.ndarray, c_to: np.ndarray) -> np.ndarray:
    """Latent direction from one class center to another."""
    c_from = np.asarray(c_from, dtype=np.float64)
    c_to = np.asarray(c_to, dtype=np.float64)
    if c_from.shape != c_to.shape:
        raise ValueError("centers must share a dimension")
    return c_to - c_from


def morph(sae: SaeModel, x: np.ndarray, v: np.ndarray, alpha: float) -> np.ndarray:
    """decode(encode(x) + alpha*v) for a single sample vector x."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("x must be a single sample vector")
    z = encode(sae, x[:, None])
    shift = (sae.dtype.type(alpha) * np.asarray(v, sae.dtype))[:, None]
    return decode(sae, z + shift)[:, 0]


def morph_track(sae: SaeModel, svm: SvmModel, x: np.ndarray,
                pair: tuple[int, int], n_steps: int,
                source_id: int = -1) -> MorphTrack:
    """Morph from pair[0] toward pair[1] at equally spaced alphas in [0, 1].

    Records the decoded output and the pair's normalized score of the shifted
    latent code at every step.
    """
    if n_steps < 2:
        raise ValueError("need at least the two endpoint steps")
    a, b = pair
    if (a, b) not in svm.pairs:
        raise KeyError(f"unknown class pair {pair}")
    v = deformation_vector(svm.class_centers[a], svm.class_centers[b])
    alphas = np.linspace(0.0, 1.0, n_steps)
    x = np.asarray(x)
    z0 = np.asarray(encode(sae, x[:, None])[:, 0], np.float64)

    outputs = np.stack([morph(sae, x, v, float(al)) for al in alphas], axis=1)
    scores = tuple(normalized_score(svm, pair, z0 + al * v) for al in alphas)
    return MorphTrack(source_id=source_id, pair=(a, b),
                      alphas=tuple(float(al) for al in alphas),
                      outputs=outputs, scores=scores)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a single [0, 1] grayscale image as a binary PGM file."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        f.write(data.tobytes())
