"""Orthogonal alignment of solved latent targets to the current latent state.

The rotation is built from the pseudo-inverse of the target matrix: with the
latents Z (column-centered) and targets Z*, the map P = Z . pinv(Z*) is
decomposed by SVD and its nonzero singular values are flattened to one, which
keeps the rotational part and discards scale. Reflections are allowed. When
the targets are rank-deficient the rotation acts orthogonally on the retained
row space and as identity on its complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Singular values above this fraction of the largest one count as nonzero when
# flattening the spectrum.
FLATTEN_RTOL = 1e-8

DEFAULT_RCOND = 1e-12


@dataclass(frozen=True)
class AlignmentResult:
    """Rotation R with its fit residual ||Zc - R Z*||_F and retained rank."""

    R: np.ndarray
    residual: float
    rank_used: int
    degenerate: bool = False


def pinv(M: np.ndarray, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below rcond*sigma_max drop to zero."""
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix must be finite")
    if rcond <= 0:
        raise ValueError("rcond must be positive")
    return np.linalg.pinv(M, rcond=rcond)


def ideal_rotation(Z: np.ndarray, Zstar: np.ndarray,
                   rcond: float = DEFAULT_RCOND) -> AlignmentResult:
    """Best-fit orthogonal map R with R Z* close to Z (centered).

    Z is column-mean-centered before forming the product; Z* is expected to be
    centered already (the target solver centers its output). Requires more
    columns than rows.
    """
    Z = np.asarray(Z, dtype=np.float64)
    Zstar = np.asarray(Zstar, dtype=np.float64)
    if Z.shape != Zstar.shape:
        raise ValueError(f"shape mismatch: Z {Z.shape} vs Z* {Zstar.shape}")
    m, n = Z.shape
    if n <= m:
        raise ValueError(f"need more data points than latent dimensions (n={n}, m={m})")

    Zc = Z - Z.mean(axis=1, keepdims=True)
    if not Zstar.any():
        return AlignmentResult(R=np.eye(m), residual=float(np.linalg.norm(Zc)),
                               rank_used=0, degenerate=True)

    P = Zc @ pinv(Zstar, rcond=rcond)
    U, s, Vt = np.linalg.svd(P)
    keep = s > FLATTEN_RTOL * s[0] if s[0] > 0 else np.zeros(s.shape, dtype=bool)
    rank = int(np.count_nonzero(keep))
    if rank == m:
        R = U @ Vt
    else:
        # Identity on the complement of the retained row space.
        Vr = Vt[keep]
        R = U[:, keep] @ Vr + (np.eye(m) - Vr.T @ Vr)
    residual = float(np.linalg.norm(Zc - R @ Zstar))
    return AlignmentResult(R=R, residual=residual, rank_used=rank,
                           degenerate=(rank == 0))


def place_targets(R: np.ndarray, Zstar: np.ndarray) -> np.ndarray:
    """Final per-sample target positions R Z*."""
    R = np.asarray(R)
    Zstar = np.asarray(Zstar)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[1] != Zstar.shape[0]:
        raise ValueError(f"shape mismatch: R {R.shape} vs Z* {Zstar.shape}")
    return R @ Zstar
