"""Run configuration: JSON-compatible structure, parsing, and validation.

``parse_config`` builds a RunConfig from a dict or JSON file and reports every
structural problem at once, each prefixed with its field path (for example
``train.gamma: must be in [0, 1]``). ``validate_files`` separately checks that
referenced files exist, so configs can round-trip without touching disk.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import Decomposition
from .mds import DistanceSpec, uniform_distance_spec
from .model import OUTPUT_ACTIVATIONS, MlpSpec
from .training import AlignParams, MdsParams, TrainConfig


class ConfigError(ValueError):
    """Carries one line per invalid field, prefixed by its path."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(problems))


@dataclass(frozen=True)
class DatasetConfig:
    format: str = "csv"               # "idx" | "csv"
    images: str | None = None         # idx
    labels: str | None = None         # idx
    path: str | None = None           # csv
    has_labels: bool = True           # csv


@dataclass(frozen=True)
class SplitConfig:
    n_labeled: int | None = None      # None: keep everything labeled
    seed: int = 0


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-3
    epochs: int = 50
    seed: int = 0


@dataclass(frozen=True)
class ActiveConfig:
    initial_epochs: int = 50
    rounds: int = 1
    k: int = 100
    round_epochs: int = 50
    oracle: str | None = None         # replay oracle CSV; None: dataset truth


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    model: MlpSpec
    train: TrainConfig
    decomposition: Decomposition | None = None
    distances: DistanceSpec | None = None
    test_dataset: DatasetConfig | None = None
    split: SplitConfig = field(default_factory=SplitConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    active: ActiveConfig = field(default_factory=ActiveConfig)
    output_dir: str = "runs/out"


def _get(raw: dict, key: str, default=None):
    return raw[key] if key in raw else default


def _parse_dataset(raw: dict, path: str, problems: list[str]) -> DatasetConfig:
    fmt = _get(raw, "format", "csv")
    if fmt not in ("idx", "csv"):
        problems.append(f"{path}.format: must be 'idx' or 'csv', got {fmt!r}")
    cfg = DatasetConfig(
        format=fmt,
        images=_get(raw, "images"),
        labels=_get(raw, "labels"),
        path=_get(raw, "path"),
        has_labels=bool(_get(raw, "has_labels", True)),
    )
    if fmt == "idx":
        if not cfg.images:
            problems.append(f"{path}.images: required for idx datasets")
        if not cfg.labels:
            problems.append(f"{path}.labels: required for idx datasets")
    elif fmt == "csv" and not cfg.path:
        problems.append(f"{path}.path: required for csv datasets")
    return cfg


def _parse_distances(raw, k_hint: int | None, problems: list[str]) -> DistanceSpec | None:
    if raw is None:
        return None
    try:
        if isinstance(raw, dict) and "uniform" in raw:
            if k_hint is None:
                problems.append("distances.uniform: needs a decomposition to fix K")
                return None
            return uniform_distance_spec(k_hint, float(raw["uniform"]))
        if isinstance(raw, dict) and "matrix" in raw:
            return DistanceSpec(raw["matrix"])
        problems.append("distances: expected {'uniform': x} or {'matrix': [[...]]}")
    except (ValueError, TypeError) as e:
        problems.append(f"distances: {e}")
    return None


def parse_config(source) -> RunConfig:
    """Build a RunConfig from a dict, JSON string, or JSON file path."""
    if isinstance(source, (str, Path)) and Path(source).suffix == ".json":
        raw = json.loads(Path(source).read_text())
    elif isinstance(source, str):
        raw = json.loads(source)
    else:
        raw = dict(source)

    problems: list[str] = []
    dataset = _parse_dataset(raw.get("dataset", {}), "dataset", problems)
    test_dataset = None
    if raw.get("test_dataset") is not None:
        test_dataset = _parse_dataset(raw["test_dataset"], "test_dataset", problems)

    decomposition = None
    if raw.get("decomposition") is not None:
        d = raw["decomposition"]
        try:
            decomposition = Decomposition.from_members(
                d.get("name", "decomposition"), d["groups"])
        except (KeyError, ValueError, TypeError) as e:
            problems.append(f"decomposition: {e}")

    k_hint = decomposition.n_groups if decomposition else None
    distances = _parse_distances(raw.get("distances"), k_hint, problems)

    model = None
    m_raw = raw.get("model", {})
    try:
        model = MlpSpec(
            layer_dims=tuple(int(d) for d in m_raw["layer_dims"]),
            output_activation=m_raw.get("output_activation", "sigmoid"),
        )
    except KeyError:
        problems.append("model.layer_dims: required")
    except (ValueError, TypeError) as e:
        problems.append(f"model: {e}")
    if model and model.output_activation not in OUTPUT_ACTIVATIONS:
        problems.append(f"model.output_activation: unknown {model.output_activation!r}")

    train = None
    t_raw = raw.get("train", {})
    try:
        train = TrainConfig(
            gamma=float(t_raw.get("gamma", 0.5)),
            learning_rate=float(t_raw.get("learning_rate", 0.05)),
            batch_size=int(t_raw.get("batch_size", 64)),
            epochs=int(t_raw.get("epochs", 1)),
            seed=int(t_raw.get("seed", 0)),
            momentum=float(t_raw.get("momentum", 0.0)),
            mds=MdsParams(
                max_iter=int(t_raw.get("mds", {}).get("max_iter", 300)),
                tol=float(t_raw.get("mds", {}).get("tol", 1e-9)),
            ),
            align=AlignParams(
                rcond=float(t_raw.get("align", {}).get("rcond", 1e-12)),
            ),
        )
    except (ValueError, TypeError) as e:
        problems.append(f"train: {e}")

    split_raw = raw.get("split", {})
    n_labeled = split_raw.get("n_labeled")
    split = SplitConfig(
        n_labeled=int(n_labeled) if n_labeled is not None else None,
        seed=int(split_raw.get("seed", 0)),
    )
    if split.n_labeled is not None and split.n_labeled < 0:
        problems.append("split.n_labeled: must be nonnegative")

    s_raw = raw.get("svm", {})
    svm = SvmConfig(lam=float(s_raw.get("lambda", 1e-3)),
                    epochs=int(s_raw.get("epochs", 50)),
                    seed=int(s_raw.get("seed", 0)))
    if svm.lam <= 0:
        problems.append("svm.lambda: must be positive")

    a_raw = raw.get("active", {})
    active = ActiveConfig(
        initial_epochs=int(a_raw.get("initial_epochs", 50)),
        rounds=int(a_raw.get("rounds", 1)),
        k=int(a_raw.get("k", 100)),
        round_epochs=int(a_raw.get("round_epochs", 50)),
        oracle=a_raw.get("oracle"),
    )
    if active.k < 0:
        problems.append("active.k: must be nonnegative")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        dataset=dataset,
        test_dataset=test_dataset,
        decomposition=decomposition,
        distances=distances,
        model=model,
        train=train,
        split=split,
        svm=svm,
        active=active,
        output_dir=str(raw.get("output_dir", "runs/out")),
    )


def serialize_config(cfg: RunConfig) -> dict:
    """Back to the JSON structure accepted by parse_config."""
    out: dict = {
        "dataset": {k: v for k, v in asdict(cfg.dataset).items() if v is not None},
        "model": {
            "layer_dims": list(cfg.model.layer_dims),
            "output_activation": cfg.model.output_activation,
        },
        "train": {
            "gamma": cfg.train.gamma,
            "learning_rate": cfg.train.learning_rate,
            "batch_size": cfg.train.batch_size,
            "epochs": cfg.train.epochs,
            "seed": cfg.train.seed,
            "momentum": cfg.train.momentum,
            "mds": {"max_iter": cfg.train.mds.max_iter, "tol": cfg.train.mds.tol},
            "align": {"rcond": cfg.train.align.rcond},
        },
        "split": {"n_labeled": cfg.split.n_labeled, "seed": cfg.split.seed},
        "svm": {"lambda": cfg.svm.lam, "epochs": cfg.svm.epochs, "seed": cfg.svm.seed},
        "active": {k: v for k, v in asdict(cfg.active).items() if v is not None},
        "output_dir": cfg.output_dir,
    }
    if cfg.test_dataset is not None:
        out["test_dataset"] = {k: v for k, v in asdict(cfg.test_dataset).items()
                               if v is not None}
    if cfg.decomposition is not None:
        groups: dict[str, list[int]] = {name: [] for name in cfg.decomposition.class_names}
        for raw_label, idx in sorted(cfg.decomposition.groups.items()):
            groups[cfg.decomposition.class_names[idx]].append(raw_label)
        out["decomposition"] = {"name": cfg.decomposition.name, "groups": groups}
    if cfg.distances is not None:
        out["distances"] = {"matrix": cfg.distances.d.tolist()}
    return out


def validate_files(cfg: RunConfig) -> None:
    """Check that every referenced file exists; raises ConfigError listing misses."""
    problems: list[str] = []

    def check(path_str: str | None, field_path: str):
        if path_str is not None and not Path(path_str).exists():
            problems.append(f"{field_path}: file not found: {path_str}")

    for name, ds in (("dataset", cfg.dataset), ("test_dataset", cfg.test_dataset)):
        if ds is None:
            continue
        if ds.format == "idx":
            check(ds.images, f"{name}.images")
            check(ds.labels, f"{name}.labels")
        else:
            check(ds.path, f"{name}.path")
    check(cfg.active.oracle, "active.oracle")
    if problems:
        raise ConfigError(problems)
