"""Experiment commands behind the CLI: load, train, evaluate, sweep, guide, morph.

Every command takes a RunConfig, writes its artifacts under the config's
output directory, and returns the paths (plus in-memory results) so tests and
scripts can consume them directly. All CSVs carry a header row and use RFC
4180 quoting with "." as the decimal separator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import active as active_mod
from . import svm as svm_mod
from .baselines import SoftmaxClassifier  # noqa: F401  (re-export for experiments)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, validate_files
from .data import Dataset, apply_decomposition, load_csv, load_idx, split_labeled
from .model import SaeModel, encode, init_model, reconstruct
from .morphing import morph_track, write_pgm
from .svm import SvmModel, calibration_curve, normalized_score, score_histogram, svm_fit
from .training import EpochMetrics, TrainConfig, train


def load_dataset(cfg: RunConfig, which: str = "dataset") -> Dataset:
    """Load + decompose + split one of the config's datasets."""
    dcfg = cfg.dataset if which == "dataset" else cfg.test_dataset
    if dcfg is None:
        raise ValueError(f"config has no {which}")
    if dcfg.format == "idx":
        ds = load_idx(dcfg.images, dcfg.labels)
    else:
        ds = load_csv(dcfg.path, has_labels=dcfg.has_labels)
    if cfg.decomposition is not None and ds.raw_labels is not None:
        ds = apply_decomposition(ds, cfg.decomposition)
    if which == "dataset" and cfg.split.n_labeled is not None:
        ds = split_labeled(ds, cfg.split.n_labeled, cfg.split.seed)
    return ds


def write_csv_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                             for v in row])


def project_2d(Z: np.ndarray, seed: int = 0) -> np.ndarray:
    """(n, 2) view of (m, n) latents: the first two axes, or a seeded
    random orthonormal projection when m > 2."""
    m = Z.shape[0]
    if m <= 2:
        out = np.zeros((Z.shape[1], 2))
        out[:, :m] = Z.T
        return out
    basis = np.linalg.qr(np.random.default_rng(seed).standard_normal((m, 2)))[0]
    return Z.T @ basis


def classification_error(model: SvmModel, Z: np.ndarray, truth: np.ndarray) -> float:
    preds = np.array([svm_mod.predict(model, Z[:, j]) for j in range(Z.shape[1])])
    return float(np.mean(preds != truth))


def recon_rmse(model: SaeModel, ds: Dataset) -> float:
    X = np.asarray(ds.features.T, model.dtype)
    err = np.asarray(reconstruct(model, X), np.float64) - np.asarray(X, np.float64)
    return float(np.sqrt(np.mean(err * err)))


@dataclass(frozen=True)
class TrainResult:
    model: SaeModel
    svm: SvmModel
    metrics: list[EpochMetrics]
    checkpoint_path: Path
    metrics_path: Path
    latent_path: Path


def _fit_latent_svm(model: SaeModel, ds: Dataset, cfg: RunConfig) -> SvmModel:
    Z = encode(model, ds.features[ds.labeled_ids].T)
    return svm_fit(Z, ds.labeled_superclasses(),
                   lam=cfg.svm.lam, epochs=cfg.svm.epochs, seed=cfg.svm.seed)


def cmd_train(cfg: RunConfig, ds: Dataset | None = None) -> TrainResult:
    """Train per config; write checkpoint, metrics CSV, and latent scatter CSV."""
    validate_files(cfg)
    if ds is None:
        ds = load_dataset(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    model = init_model(cfg.model, seed=cfg.train.seed)
    model, metrics = train(model, ds, cfg.distances, cfg.train)
    svm = _fit_latent_svm(model, ds, cfg)

    checkpoint_path = out / "model.sae"
    save_checkpoint(checkpoint_path, model, svm=svm,
                    extra={"gamma": repr(cfg.train.gamma), "seed": str(cfg.train.seed)})

    metrics_path = out / "metrics.csv"
    write_csv_rows(metrics_path,
                   ["epoch", "recon_rmse", "structural", "combined"],
                   [(m.epoch, m.recon_rmse, m.structural_loss, m.combined_loss)
                    for m in metrics])

    Z = encode(model, ds.features.T)
    xy = project_2d(np.asarray(Z, np.float64), seed=cfg.train.seed)
    classes = (ds.superclass if ds.superclass is not None
               else np.full(ds.n, -1, dtype=np.int64))
    latent_path = out / "latent2d.csv"
    write_csv_rows(latent_path, ["id", "x", "y", "class"],
                   [(i, float(xy[i, 0]), float(xy[i, 1]), int(classes[i]))
                    for i in range(ds.n)])
    return TrainResult(model=model, svm=svm, metrics=metrics,
                       checkpoint_path=checkpoint_path,
                       metrics_path=metrics_path, latent_path=latent_path)


@dataclass(frozen=True)
class EvalReport:
    classification_error: float
    recon_rmse: float
    calibration_path: Path
    histogram_path: Path


def cmd_eval(cfg: RunConfig, checkpoint_path, test_ds: Dataset | None = None,
             n_bins: int = 10) -> EvalReport:
    """Test-set error, reconstruction RMSE, calibration and score-histogram CSVs."""
    bundle = load_checkpoint(checkpoint_path)
    if bundle.svm is None:
        raise ValueError(f"{checkpoint_path}: checkpoint has no svm section")
    if test_ds is None:
        test_ds = load_dataset(cfg, "test_dataset")
    if test_ds.superclass is None:
        raise ValueError("test dataset has no class labels")
    model, svm = bundle.model, bundle.svm

    Z = encode(model, test_ds.features.T)
    truth = test_ds.superclass
    err = classification_error(svm, Z, truth)
    rmse = recon_rmse(model, test_ds)

    # Binary-style score stream: every (sample, pair) contributes its
    # normalized score with truth "sample really is the pair's upper class",
    # restricted to samples from the pair's two classes.
    scores: list[float] = []
    truths: list[int] = []
    for (a, b) in sorted(svm.pairs):
        sel = np.flatnonzero((truth == a) | (truth == b))
        for j in sel:
            scores.append(normalized_score(svm, (a, b), Z[:, j]))
            truths.append(int(truth[j] == b))

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bins = calibration_curve(scores, truths, n_bins)
    calibration_path = out / "calibration.csv"
    write_csv_rows(calibration_path, ["bin_lo", "bin_hi", "count", "precision"],
                   [(b.score_lo, b.score_hi, b.count, b.precision) for b in bins])
    hist = score_histogram(scores, n_bins)
    histogram_path = out / "score_histogram.csv"
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    write_csv_rows(histogram_path, ["bin_lo", "bin_hi", "count"],
                   [(float(edges[k]), float(edges[k + 1]), int(hist[k]))
                    for k in range(n_bins)])
    return EvalReport(classification_error=err, recon_rmse=rmse,
                      calibration_path=calibration_path, histogram_path=histogram_path)


def cmd_sweep_gamma(cfg: RunConfig, gammas: list[float]) -> Path:
    """Independent seeded runs per gamma; CSV rows (gamma, recon_rmse, class_error)."""
    if len(gammas) < 2:
        raise ValueError("sweep needs at least two gamma values")
    validate_files(cfg)
    ds = load_dataset(cfg)
    test_ds = load_dataset(cfg, "test_dataset")
    rows = []
    for gamma in gammas:
        run_cfg = replace(cfg, train=replace(cfg.train, gamma=float(gamma)),
                          output_dir=str(Path(cfg.output_dir) / f"gamma_{gamma}"))
        result = cmd_train(run_cfg, ds=ds)
        Z = encode(result.model, test_ds.features.T)
        err = classification_error(result.svm, Z, test_ds.superclass)
        rows.append((float(gamma), recon_rmse(result.model, test_ds), err))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep_path = out / "gamma_sweep.csv"
    write_csv_rows(sweep_path, ["gamma", "recon_rmse", "class_error"], rows)
    return sweep_path


def _test_error(model: SaeModel, svm: SvmModel, test_ds: Dataset) -> float:
    Z = encode(model, test_ds.features.T)
    return classification_error(svm, Z, test_ds.superclass)


def cmd_guided(cfg: RunConfig) -> Path:
    """Guided vs random labeling arms with shared seeds.

    Emits (arm, round, labeled_count, test_error); round 0 is the state after
    initial training, before any label injection.
    """
    validate_files(cfg)
    base_ds = load_dataset(cfg)
    test_ds = load_dataset(cfg, "test_dataset")
    if cfg.active.oracle is not None:
        oracle = active_mod.ReplayOracle.from_csv(cfg.active.oracle)
    else:
        oracle = active_mod.ReplayOracle.from_dataset(
            load_dataset(replace(cfg, split=replace(cfg.split, n_labeled=None))))

    rows = []
    for arm in ("guided", "random"):
        ds = base_ds
        model = init_model(cfg.model, seed=cfg.train.seed)
        tc = replace(cfg.train, epochs=cfg.active.initial_epochs)
        model, _ = train(model, ds, cfg.distances, tc)
        svm = _fit_latent_svm(model, ds, cfg)
        rows.append((arm, 0, len(ds.labeled_ids), _test_error(model, svm, test_ds)))
        offset = cfg.active.initial_epochs
        for rnd in range(1, cfg.active.rounds + 1):
            result = active_mod.guided_round(ds, model, svm, cfg.active.k, oracle,
                                             arm=arm, seed=cfg.train.seed + rnd)
            ds = result.dataset
            tc = replace(cfg.train, epochs=cfg.active.round_epochs, epoch_offset=offset)
            model, _ = train(model, ds, cfg.distances, tc)
            offset += cfg.active.round_epochs
            svm = _fit_latent_svm(model, ds, cfg)
            rows.append((arm, rnd, len(ds.labeled_ids), _test_error(model, svm, test_ds)))

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    guided_path = out / "guided.csv"
    write_csv_rows(guided_path, ["arm", "round", "labeled_count", "test_error"], rows)
    return guided_path


def cmd_rank(cfg: RunConfig, checkpoint_path) -> Path:
    """Margin ranking of the unlabeled pool as CSV (id, margin)."""
    bundle = load_checkpoint(checkpoint_path)
    if bundle.svm is None:
        raise ValueError(f"{checkpoint_path}: checkpoint has no svm section")
    ds = load_dataset(cfg)
    ranking = active_mod.rank_unlabeled(bundle.svm, bundle.model, ds)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rank_path = out / "ranking.csv"
    write_csv_rows(rank_path, ["id", "margin"],
                   [(i, g) for i, g in ranking.entries])
    return rank_path


def cmd_morph(cfg: RunConfig, checkpoint_path, sample_id: int,
              pair: tuple[int, int], n_steps: int) -> list[Path]:
    """Write one decoded output per morph step (PGM for images, CSV for vectors)."""
    bundle = load_checkpoint(checkpoint_path)
    if bundle.svm is None:
        raise ValueError(f"{checkpoint_path}: checkpoint has no svm section")
    ds = load_dataset(cfg)
    track = morph_track(bundle.model, bundle.svm, ds.features[sample_id],
                        pair, n_steps, source_id=sample_id)
    out = Path(cfg.output_dir) / f"morph_{sample_id}_{pair[0]}to{pair[1]}"
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for step, alpha in enumerate(track.alphas):
        if ds.kind == "image" and ds.image_shape is not None:
            p = out / f"step_{step:03d}.pgm"
            write_pgm(p, track.outputs[:, step].reshape(ds.image_shape))
        else:
            p = out / f"step_{step:03d}.csv"
            write_csv_rows(p, [f"x{i}" for i in range(ds.dim)],
                           [tuple(float(v) for v in track.outputs[:, step])])
        paths.append(p)
    write_csv_rows(out / "scores.csv", ["alpha", "score"],
                   list(zip(track.alphas, track.scores)))
    paths.append(out / "scores.csv")
    return paths
