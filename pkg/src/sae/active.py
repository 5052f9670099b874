"""Margin-based uncertainty ranking and the guided-labeling round.

A sample's margin is the gap between its best and second best per-class
scores; small margins mark the samples most worth labeling. A round ranks the
unlabeled pool, asks an oracle for the selected ids, and returns a new dataset
with those ids moved to the labeled side. Rounds are transactional: any
oracle failure leaves the dataset untouched.
"""

from __future__ import annotations

import csv
import queue
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .data import Dataset, move_to_labeled
from .model import SaeModel, encode
from .svm import SvmModel, per_class_scores


class OracleError(RuntimeError):
    """Raised when an oracle refuses or cannot answer a label query."""


class LabelOracle(Protocol):
    def label(self, ids: Sequence[int]) -> list[int]:
        """Class indices for the given sample ids; may raise OracleError."""


class ReplayOracle:
    """Answers from a fixed id -> class mapping (held-back true labels)."""

    def __init__(self, mapping: Mapping[int, int]):
        self._mapping = {int(k): int(v) for k, v in mapping.items()}

    @classmethod
    def from_csv(cls, path) -> "ReplayOracle":
        mapping: dict[int, int] = {}
        with open(Path(path), newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is not None and header[:2] != ["id", "label"]:
                # No header: the first row is data.
                mapping[int(header[0])] = int(header[1])
            for row in reader:
                if row:
                    mapping[int(row[0])] = int(row[1])
        return cls(mapping)

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "ReplayOracle":
        if ds.superclass is None:
            raise ValueError("dataset has no superclass labels to replay")
        return cls({i: int(c) for i, c in enumerate(ds.superclass) if c >= 0})

    def label(self, ids: Sequence[int]) -> list[int]:
        missing = [i for i in ids if int(i) not in self._mapping]
        if missing:
            raise OracleError(f"no labels for ids {missing[:5]}")
        return [self._mapping[int(i)] for i in ids]


class QueueOracle:
    """Blocks on a queue fed by an interactive source (the labeling service).

    ``answer(id, cls)`` is called by the producer; ``label`` waits up to
    ``timeout`` seconds per id and treats a timeout as refusal.
    """

    def __init__(self, timeout: float = 300.0):
        self.timeout = timeout
        self._answers: "queue.Queue[tuple[int, int]]" = queue.Queue()

    def answer(self, sample_id: int, cls: int) -> None:
        self._answers.put((int(sample_id), int(cls)))

    def label(self, ids: Sequence[int]) -> list[int]:
        wanted = {int(i) for i in ids}
        got: dict[int, int] = {}
        while wanted - got.keys():
            try:
                sample_id, cls = self._answers.get(timeout=self.timeout)
            except queue.Empty:
                raise OracleError(f"timed out waiting for labels of {sorted(wanted - got.keys())[:5]}")
            if sample_id in wanted:
                got[sample_id] = cls
        return [got[int(i)] for i in ids]


@dataclass(frozen=True)
class UncertaintyRanking:
    """(id, margin) entries sorted by ascending margin, ties by ascending id."""

    entries: tuple[tuple[int, float], ...]
    model_epoch: int

    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]


def margin(model: SvmModel, z: np.ndarray) -> float:
    """Gap between the best and second-best per-class scores; small = uncertain."""
    scores = sorted(per_class_scores(model, z).values(), reverse=True)
    if len(scores) < 2:
        raise ValueError("margin needs at least two classes")
    return float(scores[0] - scores[1])


def rank_unlabeled(model: SvmModel, sae: SaeModel, ds: Dataset) -> UncertaintyRanking:
    """Margins for every unlabeled sample, most uncertain first."""
    if len(ds.unlabeled_ids) == 0:
        raise ValueError("no unlabeled samples to rank")
    Z = encode(sae, ds.features[ds.unlabeled_ids].T)
    margins = [margin(model, Z[:, j]) for j in range(Z.shape[1])]
    order = sorted(zip(ds.unlabeled_ids.tolist(), margins), key=lambda e: (e[1], e[0]))
    return UncertaintyRanking(entries=tuple((int(i), float(g)) for i, g in order),
                              model_epoch=sae.epochs_trained)


def select_batch(ranking: UncertaintyRanking, k: int) -> list[int]:
    """The k most uncertain ids."""
    if k > len(ranking.entries):
        raise ValueError(f"k={k} exceeds {len(ranking.entries)} ranked samples")
    return [i for i, _ in ranking.entries[:k]]


@dataclass(frozen=True)
class GuidedRoundResult:
    dataset: Dataset
    selected_ids: tuple[int, ...]
    labels: tuple[int, ...]
    arm: str


def guided_round(
    ds: Dataset,
    sae: SaeModel,
    svm: SvmModel,
    k: int,
    oracle: LabelOracle,
    arm: str = "guided",
    seed: int = 0,
) -> GuidedRoundResult:
    """Select k unlabeled samples (by margin, or uniformly for the random arm),
    label them through the oracle, and return the enlarged dataset.
    """
    if arm not in ("guided", "random"):
        raise ValueError(f"unknown arm {arm!r}")
    if k == 0:
        return GuidedRoundResult(dataset=ds, selected_ids=(), labels=(), arm=arm)
    if arm == "guided":
        ids = select_batch(rank_unlabeled(svm, sae, ds), k)
    else:
        if k > len(ds.unlabeled_ids):
            raise ValueError(f"k={k} exceeds unlabeled pool")
        rng = np.random.default_rng(seed)
        ids = sorted(int(i) for i in rng.choice(ds.unlabeled_ids, size=k, replace=False))

    labels = oracle.label(ids)
    bad = [c for c in labels if not (0 <= int(c) < max(ds.n_classes, 1))]
    if bad:
        raise OracleError(f"oracle returned classes {bad[:5]} outside [0, {ds.n_classes})")
    updated = move_to_labeled(ds, dict(zip(ids, labels)))
    return GuidedRoundResult(dataset=updated, selected_ids=tuple(ids),
                             labels=tuple(int(c) for c in labels), arm=arm)
