"""Latent target placement by stress majorization (SMACOF).

Classes are placed so that their pairwise latent distances match a prescribed
distance matrix. Because the prescribed intra-class distance is zero, the
optimal configuration collapses every class to a single point, so the solver
works on the K class centers (weighted by class size) instead of all n
samples. An exact per-sample mode exists for small problems to validate that
reduction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-9

# Two centers closer than this with a positive prescribed distance get one of
# them nudged by GUARD_STEP before the update, so the majorizer never divides
# by zero.
GUARD_EPS = 1e-12
GUARD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class DistanceSpec:
    """Symmetric K x K matrix of prescribed inter-class latent distances."""

    d: np.ndarray

    def __eq__(self, other):
        return isinstance(other, DistanceSpec) and np.array_equal(self.d, other.d)

    def __hash__(self):
        return hash(self.d.tobytes())

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.allclose(d, d.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("diagonal distances must be zero")
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        object.__setattr__(self, "d", d)
        d.flags.writeable = False

    @property
    def K(self) -> int:
        return self.d.shape[0]


def uniform_distance_spec(k: int, inter: float) -> DistanceSpec:
    """All distinct classes at distance ``inter``, zero on the diagonal."""
    if k < 1:
        raise ValueError("need at least one class")
    if inter <= 0:
        raise ValueError("inter-class distance must be positive")
    d = np.full((k, k), float(inter))
    np.fill_diagonal(d, 0.0)
    return DistanceSpec(d)


@dataclass(frozen=True)
class CenterConfiguration:
    """K points (rows) in latent dimension m, with positive pair weights w_i*w_j."""

    centers: np.ndarray  # (K, m)
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if centers.ndim != 2:
            raise ValueError("centers must be a (K, m) matrix")
        if weights.shape != (centers.shape[0],):
            raise ValueError("one weight per center required")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def m(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class StressReport:
    initial_stress: float
    final_stress: float
    iterations: int
    history: tuple[float, ...] = ()


def _pairwise_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def stress(config: CenterConfiguration, spec: DistanceSpec) -> float:
    """Weighted raw stress: sum over i<j of w_i*w_j*(||c_i - c_j|| - d_ij)^2."""
    if config.K != spec.K:
        raise ValueError(f"configuration has {config.K} centers, spec has {spec.K}")
    dist = _pairwise_distances(config.centers)
    w = config.weights
    resid = dist - spec.d
    sq = np.outer(w, w) * resid * resid
    return float(np.sum(np.triu(sq, k=1)))


def smacof_solve(
    init: CenterConfiguration,
    spec: DistanceSpec,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    guard_seed: int = 0,
) -> tuple[CenterConfiguration, StressReport]:
    """Minimize weighted raw stress by iterated Guttman transforms.

    Each iteration is guaranteed not to increase the stress. Stops when the
    relative stress decrease falls below ``tol`` or after ``max_iter``
    iterations; the result is re-centered so its weighted centroid is the
    origin.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not np.all(np.isfinite(init.centers)):
        raise ValueError("initial centers must be finite")
    if init.K != spec.K:
        raise ValueError(f"init has {init.K} centers, spec has {spec.K}")

    w = init.weights
    x = np.array(init.centers)
    v = np.outer(w, w)
    np.fill_diagonal(v, 0.0)
    vmat = np.diag(v.sum(axis=1)) - v
    vpinv = np.linalg.pinv(vmat)
    rng = np.random.default_rng(guard_seed)

    history = [stress(CenterConfiguration(x, w), spec)]
    sigma = history[0]
    iterations = 0
    for _ in range(max_iter):
        dist = _pairwise_distances(x)
        coincident = (dist < GUARD_EPS) & (spec.d > 0) & (v > 0)
        if coincident.any():
            for i, j in zip(*np.nonzero(np.triu(coincident, k=1))):
                direction = rng.standard_normal(x.shape[1])
                x[j] = x[j] + GUARD_STEP * direction / np.linalg.norm(direction)
            dist = _pairwise_distances(x)

        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(dist > 0, -v * spec.d / dist, 0.0)
        np.fill_diagonal(b, 0.0)
        np.fill_diagonal(b, -b.sum(axis=1))
        x = vpinv @ (b @ x)

        iterations += 1
        new_sigma = stress(CenterConfiguration(x, w), spec)
        history.append(new_sigma)
        if sigma > 0 and (sigma - new_sigma) < tol * sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
        if sigma == 0.0:
            break

    wsum = w.sum()
    if wsum > 0:
        x = x - (w @ x) / wsum
    report = StressReport(
        initial_stress=history[0],
        final_stress=history[-1],
        iterations=iterations,
        history=tuple(history),
    )
    return CenterConfiguration(x, w), report


def per_sample_targets(
    Z: np.ndarray,
    labels: np.ndarray,
    spec: DistanceSpec,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    guard_seed: int = 0,
) -> np.ndarray:
    """Target latent positions Z* (m, n): each column is its class's solved center.

    Class centers of Z seed the solver, weighted by class size, so targets stay
    close to the current configuration. Classes absent from ``labels`` get zero
    weight and a warning instead of failing.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    if Z.ndim != 2:
        raise ValueError("Z must be (m, n)")
    m, n = Z.shape
    if labels.shape != (n,):
        raise ValueError("one label per column of Z required")
    if n == 0:
        raise ValueError("cannot place targets for an empty latent set")
    if labels.min() < 0 or labels.max() >= spec.K:
        raise ValueError("labels must lie in [0, K)")

    weights = np.bincount(labels, minlength=spec.K).astype(np.float64)
    empty = np.flatnonzero(weights == 0)
    if empty.size:
        warnings.warn(f"classes {empty.tolist()} have no samples; skipped with zero weight",
                      stacklevel=2)
    centers = np.zeros((spec.K, m))
    for c in range(spec.K):
        if weights[c] > 0:
            centers[c] = Z[:, labels == c].mean(axis=1)

    solved, _ = smacof_solve(CenterConfiguration(centers, weights), spec,
                             max_iter=max_iter, tol=tol, guard_seed=guard_seed)
    return solved.centers[labels].T


def per_sample_targets_exact(
    Z: np.ndarray,
    labels: np.ndarray,
    spec: DistanceSpec,
    max_iter: int = 2000,
    tol: float = 0.0,
    guard_seed: int = 0,
) -> np.ndarray:
    """Solve the full n-point problem (unit weights, intra-class distance 0).

    Validation-only path for n <= 2000; the production path is the class-center
    reduction in :func:`per_sample_targets`.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    m, n = Z.shape
    if n > 2000:
        raise ValueError("exact per-sample mode is limited to n <= 2000")
    big = DistanceSpec(spec.d[np.ix_(labels, labels)])
    init = CenterConfiguration(Z.T.copy(), np.ones(n))
    solved, _ = smacof_solve(init, big, max_iter=max_iter, tol=tol, guard_seed=guard_seed)
    return solved.centers.T
