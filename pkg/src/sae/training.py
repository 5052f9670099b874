"""Epoch loop: encode, solve targets, align, then mini-batch gradient descent.

Each epoch recomputes latent targets for the labeled samples (class-center
placement warm-started from the current latents, then rotated onto them) and
holds them fixed while every sample is visited once in seeded mini-batches.
Unlabeled samples contribute reconstruction only. The whole run is a pure
function of (dataset, config): batch order for epoch e is
``np.random.default_rng([seed, epoch_offset + e]).permutation(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import align as align_mod
from . import mds as mds_mod
from .data import Dataset
from .model import SaeModel, _forward_decoder, _forward_encoder, gradients


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass(frozen=True)
class MdsParams:
    max_iter: int = 300
    tol: float = 1e-9


@dataclass(frozen=True)
class AlignParams:
    rcond: float = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.5
    learning_rate: float = 0.05
    batch_size: int = 64
    epochs: int = 1
    seed: int = 0
    momentum: float = 0.0  # accelerated variant, off by default
    mds: MdsParams = field(default_factory=MdsParams)
    align: AlignParams = field(default_factory=AlignParams)
    epoch_offset: int = 0  # advances the shuffling streams for warm continuation

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass(frozen=True)
class EpochMetrics:
    """Post-epoch evaluation against that epoch's targets.

    ``recon_rmse`` is the elementwise root-mean-square reconstruction error
    over all samples. ``structural_loss`` and the labeled reconstruction MSE
    are per-sample squared-norm means over the labeled set;
    ``combined_loss`` = gamma*structural + (1-gamma)*labeled-recon-MSE, or the
    all-sample reconstruction MSE when no targets exist.
    """

    epoch: int
    recon_rmse: float
    structural_loss: float
    combined_loss: float


EpochCallback = Callable[[int, SaeModel, EpochMetrics], "Dataset | None"]


def batch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Deterministic sample order for one epoch."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def _epoch_targets(model: SaeModel, ds: Dataset, spec: mds_mod.DistanceSpec,
                   cfg: TrainConfig) -> np.ndarray | None:
    """Latent targets (m, n_labeled) for this epoch, or None when unused."""
    if cfg.gamma == 0.0 or len(ds.labeled_ids) == 0:
        return None
    X_lab = ds.features[ds.labeled_ids].T
    Z = np.asarray(_forward_encoder(model, np.asarray(X_lab, model.dtype))[-1], np.float64)
    labels = ds.labeled_superclasses()
    Zstar = mds_mod.per_sample_targets(Z, labels, spec,
                                       max_iter=cfg.mds.max_iter, tol=cfg.mds.tol)
    rot = align_mod.ideal_rotation(Z, Zstar, rcond=cfg.align.rcond)
    return align_mod.place_targets(rot.R, Zstar)


def _epoch_metrics(model: SaeModel, ds: Dataset, Ztilde: np.ndarray | None,
                   gamma: float, epoch: int) -> EpochMetrics:
    X = np.asarray(ds.features.T, model.dtype)
    Z = _forward_encoder(model, X)[-1]
    Xhat = _forward_decoder(model, Z)[-1]
    err = np.asarray(Xhat, np.float64) - np.asarray(X, np.float64)
    recon_rmse = float(np.sqrt(np.mean(err * err)))
    per_sample_sq = np.sum(err * err, axis=0)

    if Ztilde is None:
        structural = 0.0
        combined = float(np.mean(per_sample_sq))
    else:
        lab = ds.labeled_ids
        sdiff = np.asarray(Z[:, lab], np.float64) - Ztilde
        structural = float(np.mean(np.sum(sdiff * sdiff, axis=0)))
        combined = gamma * structural + (1.0 - gamma) * float(np.mean(per_sample_sq[lab]))
    return EpochMetrics(epoch=epoch, recon_rmse=recon_rmse,
                        structural_loss=structural, combined_loss=combined)


def train(
    model: SaeModel,
    ds: Dataset,
    spec: mds_mod.DistanceSpec | None,
    cfg: TrainConfig,
    callbacks: Sequence[EpochCallback] = (),
) -> tuple[SaeModel, list[EpochMetrics]]:
    """Train a copy of ``model`` for ``cfg.epochs`` epochs; returns (model, metrics).

    ``spec`` may be None only when gamma is 0 or nothing is labeled. Callbacks
    run after each epoch and may return a replacement Dataset (same features,
    updated label partition), which takes effect at the next epoch boundary.
    """
    if cfg.gamma > 0.0 and len(ds.labeled_ids) > 0 and spec is None:
        raise ValueError("a distance spec is required for structured training")

    model = model.copy()
    dtype = model.dtype
    velocity = None
    metrics: list[EpochMetrics] = []

    for e in range(cfg.epochs):
        epoch = cfg.epoch_offset + e
        Ztilde = _epoch_targets(model, ds, spec, cfg)
        target_col = None
        if Ztilde is not None:
            Ztilde = np.asarray(Ztilde, dtype)
            target_col = np.full(ds.n, -1, dtype=np.int64)
            target_col[ds.labeled_ids] = np.arange(len(ds.labeled_ids))

        X_all = ds.features.T
        order = batch_order(cfg.seed, epoch, ds.n)
        for start in range(0, ds.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            X = np.ascontiguousarray(X_all[:, idx], dtype=dtype)
            try:
                if Ztilde is None:
                    enc_g, dec_g, loss = gradients(model, X, None, cfg.gamma)
                else:
                    cols = target_col[idx]
                    mask = cols >= 0
                    enc_g, dec_g, loss = gradients(
                        model, X, Ztilde[:, cols[mask]], cfg.gamma, target_mask=mask)
            except FloatingPointError as e:
                raise TrainingDiverged(
                    f"epoch {epoch}, batch offset {start}: {e}") from e
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {start}")

            grads = []
            for g in enc_g:
                grads.extend(g)
            for g in dec_g:
                grads.extend(g)
            params = model.parameters()
            lr = dtype.type(cfg.learning_rate)
            if cfg.momentum > 0.0:
                if velocity is None:
                    velocity = [np.zeros_like(p) for p in params]
                mu = dtype.type(cfg.momentum)
                for p, v, g in zip(params, velocity, grads):
                    v *= mu
                    v -= lr * g
                    p += v
            else:
                for p, g in zip(params, grads):
                    p -= lr * g

        em = _epoch_metrics(model, ds, Ztilde, cfg.gamma, epoch)
        if not (np.isfinite(em.recon_rmse) and np.isfinite(em.combined_loss)):
            raise TrainingDiverged(f"non-finite metrics at epoch {epoch}: {em}")
        metrics.append(em)
        model.epochs_trained += 1
        for cb in callbacks:
            updated = cb(epoch, model, em)
            if updated is not None:
                ds = updated

    return model, metrics
