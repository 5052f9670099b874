"""Dataset ingestion, superclass decompositions, and labeled/unlabeled splits.

Datasets are immutable after construction: the backing numpy arrays are made
read-only, and every transformation (decomposition, split, label injection)
returns a new Dataset. Feature matrices are stored row-per-sample (n, dim);
sample ids are the row indices 0..n-1.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised for files that are not valid IDX (bad magic)."""


class IdxConsistencyError(ValueError):
    """Raised when image and label files disagree on sample counts."""


class CsvFormatError(ValueError):
    """Raised for ragged or non-numeric CSV input."""


class DecompositionError(ValueError):
    """Raised when a dataset contains raw labels the decomposition does not map."""


class SplitError(ValueError):
    """Raised when a labeled split cannot be satisfied."""


@dataclass(frozen=True)
class Sample:
    """Per-sample view: feature vector plus optional raw and superclass labels."""

    id: int
    features: np.ndarray
    raw_label: int | None
    superclass: int | None


@dataclass(frozen=True)
class Decomposition:
    """Grouping of raw dataset labels into the superclasses to separate.

    ``groups`` maps every raw label to a superclass index in [0, n_groups).
    """

    name: str
    groups: Mapping[int, int]
    class_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.class_names) < 1:
            raise ValueError("decomposition needs at least one group")
        indices = set(self.groups.values())
        if indices and indices != set(range(len(self.class_names))):
            raise ValueError("group indices must be contiguous from 0")

    @property
    def n_groups(self) -> int:
        return len(self.class_names)

    @classmethod
    def from_members(cls, name: str, members) -> "Decomposition":
        """Build from ``{"A": [0, 1, 9], ...}`` or ``[[0, 1, 9], ...]``."""
        if isinstance(members, Mapping):
            items = list(members.items())
        else:
            items = [(str(i), group) for i, group in enumerate(members)]
        groups: dict[int, int] = {}
        for index, (_, raws) in enumerate(items):
            for raw in raws:
                if int(raw) in groups:
                    raise ValueError(f"raw label {raw} assigned to two groups")
                groups[int(raw)] = index
        return cls(name=name, groups=groups, class_names=tuple(k for k, _ in items))


def identity_decomposition(raw_labels: Iterable[int], name: str = "identity") -> Decomposition:
    """Each raw label becomes its own superclass, in ascending label order."""
    alphabet = sorted(set(int(r) for r in raw_labels))
    return Decomposition(
        name=name,
        groups={raw: i for i, raw in enumerate(alphabet)},
        class_names=tuple(str(raw) for raw in alphabet),
    )


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional labels and a labeled/unlabeled partition.

    ``superclass`` uses -1 for "unset"; only ids in ``labeled_ids`` are treated
    as supervised. ``n_classes`` is 0 until a decomposition has been applied.
    ``kind`` is "image" (features normalized to [0, 1], sigmoid decoder) or
    "vector" (raw values, identity decoder).
    """

    features: np.ndarray
    raw_labels: np.ndarray | None
    superclass: np.ndarray | None
    n_classes: int
    labeled_ids: np.ndarray
    unlabeled_ids: np.ndarray
    kind: str = "vector"
    image_shape: tuple[int, int] | None = None
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for arr in (self.features, self.raw_labels, self.superclass,
                    self.labeled_ids, self.unlabeled_ids):
            if arr is not None:
                arr.flags.writeable = False
        n = self.features.shape[0]
        if len(self.labeled_ids) + len(self.unlabeled_ids) != n:
            raise ValueError("labeled and unlabeled ids must partition the dataset")
        if self.superclass is not None and len(self.labeled_ids):
            if np.any(self.superclass[self.labeled_ids] < 0):
                raise ValueError("labeled samples must have a superclass")
        elif self.superclass is None and len(self.labeled_ids):
            raise ValueError("labeled samples must have a superclass")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        raw = None if self.raw_labels is None or self.raw_labels[i] < 0 else int(self.raw_labels[i])
        sup = None if self.superclass is None or self.superclass[i] < 0 else int(self.superclass[i])
        return Sample(id=int(i), features=self.features[i], raw_label=raw, superclass=sup)

    def columns(self) -> np.ndarray:
        """Feature matrix as (dim, n), the orientation used by the model math."""
        return self.features.T

    def labeled_superclasses(self) -> np.ndarray:
        return self.superclass[self.labeled_ids]


def _read_be_u32(f, path: Path) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise OSError(f"{path}: truncated IDX header")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair into an image dataset.

    Pixels are scaled by 1/255 into [0, 1] (float32) and flattened row-major.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)

    with open(images_path, "rb") as f:
        magic = _read_be_u32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        count = _read_be_u32(f, images_path)
        rows = _read_be_u32(f, images_path)
        cols = _read_be_u32(f, images_path)
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise OSError(f"{images_path}: truncated pixel data "
                          f"({len(raw)} bytes, expected {count * rows * cols})")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_be_u32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        label_count = _read_be_u32(f, labels_path)
        raw = f.read(label_count)
        if len(raw) != label_count:
            raise OSError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if label_count != count:
        raise IdxConsistencyError(
            f"image count {count} != label count {label_count}")

    features = pixels.astype(np.float32) / np.float32(255)
    return Dataset(
        features=features,
        raw_labels=labels,
        superclass=None,
        n_classes=0,
        labeled_ids=np.empty(0, dtype=np.int64),
        unlabeled_ids=np.arange(count, dtype=np.int64),
        kind="image",
        image_shape=(rows, cols),
    )


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (n, rows, cols) uint8 array as an IDX image file."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    """Write a (n,) uint8 array as an IDX label file."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_csv(path, has_labels: bool = False) -> Dataset:
    """Load a rectangular numeric CSV; optional integer label as last column."""
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        width = None
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
                if has_labels and width < 2:
                    raise CsvFormatError(f"{path}: need at least one feature column")
            elif len(row) != width:
                raise CsvFormatError(
                    f"{path}:{lineno}: ragged row ({len(row)} cells, expected {width})")
            try:
                values = [float(c) for c in row]
            except ValueError as e:
                raise CsvFormatError(f"{path}:{lineno}: non-numeric cell ({e})") from None
            if has_labels:
                label = values[-1]
                if label != int(label):
                    raise CsvFormatError(f"{path}:{lineno}: non-integer label {label}")
                labels.append(int(label))
                values = values[:-1]
            rows.append(values)
    if not rows:
        raise CsvFormatError(f"{path}: empty file")

    features = np.asarray(rows, dtype=np.float64)
    n = features.shape[0]
    return Dataset(
        features=features,
        raw_labels=np.asarray(labels, dtype=np.int64) if has_labels else None,
        superclass=None,
        n_classes=0,
        labeled_ids=np.empty(0, dtype=np.int64),
        unlabeled_ids=np.arange(n, dtype=np.int64),
        kind="vector",
    )


def write_csv(ds: Dataset, path, include_labels: bool = False) -> None:
    """Write features (and optionally raw labels) back out as CSV."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            if include_labels:
                if ds.raw_labels is None:
                    raise ValueError("dataset has no raw labels to write")
                row.append(str(int(ds.raw_labels[i])))
            writer.writerow(row)


def apply_decomposition(ds: Dataset, d: Decomposition) -> Dataset:
    """Assign superclasses from raw labels; all mapped samples become labeled."""
    if ds.raw_labels is None:
        raise DecompositionError("dataset has no raw labels")
    superclass = np.full(ds.n, -1, dtype=np.int64)
    present = ds.raw_labels >= 0
    present_labels = np.unique(ds.raw_labels[present])
    unmapped = [int(r) for r in present_labels if int(r) not in d.groups]
    if unmapped:
        raise DecompositionError(f"raw labels {unmapped} not mapped by decomposition {d.name!r}")
    for raw, group in d.groups.items():
        superclass[ds.raw_labels == raw] = group
    labeled = np.flatnonzero(superclass >= 0).astype(np.int64)
    unlabeled = np.flatnonzero(superclass < 0).astype(np.int64)
    return replace(
        ds,
        features=np.asarray(ds.features),
        superclass=superclass,
        n_classes=d.n_groups,
        labeled_ids=labeled,
        unlabeled_ids=unlabeled,
        class_names=d.class_names,
    )


def split_labeled(ds: Dataset, n_labeled: int, seed: int) -> Dataset:
    """Keep a stratified, seeded subset of n_labeled samples as labeled.

    Per-class counts follow largest-remainder proportional allocation, so each
    differs from exact proportionality by at most one. Pure function of
    (ds, n_labeled, seed).
    """
    if ds.superclass is None:
        raise SplitError("apply a decomposition before splitting")
    eligible = np.flatnonzero(ds.superclass >= 0)
    if n_labeled > len(eligible):
        raise SplitError(f"n_labeled={n_labeled} exceeds {len(eligible)} labeled-capable samples")
    classes = np.unique(ds.superclass[eligible])
    sizes = {int(c): int(np.sum(ds.superclass[eligible] == c)) for c in classes}
    total = len(eligible)

    quotas = {c: n_labeled * sizes[c] / total for c in sizes}
    counts = {c: int(np.floor(q)) for c, q in quotas.items()}
    leftover = n_labeled - sum(counts.values())
    by_remainder = sorted(sizes, key=lambda c: (-(quotas[c] - counts[c]), c))
    for c in by_remainder[:leftover]:
        counts[c] += 1
    for c, k in counts.items():
        if k > sizes[c]:
            raise SplitError(f"class {c} has only {sizes[c]} samples, needs {k}")

    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    for c in sorted(counts):
        ids = np.flatnonzero(ds.superclass == c)
        chosen.append(rng.choice(ids, size=counts[c], replace=False))
    labeled = np.sort(np.concatenate(chosen)).astype(np.int64) if chosen else np.empty(0, np.int64)
    mask = np.zeros(ds.n, dtype=bool)
    mask[labeled] = True
    unlabeled = np.flatnonzero(~mask).astype(np.int64)
    return replace(ds, labeled_ids=labeled, unlabeled_ids=unlabeled)


def subset(ds: Dataset, ids) -> Dataset:
    """New dataset from the given rows, re-indexed 0..len-1.

    The labeled/unlabeled partition restricts to the kept ids.
    """
    ids = np.asarray(list(ids), dtype=np.int64)
    keep_labeled = np.isin(ids, ds.labeled_ids)
    return replace(
        ds,
        features=ds.features[ids].copy(),
        raw_labels=None if ds.raw_labels is None else ds.raw_labels[ids].copy(),
        superclass=None if ds.superclass is None else ds.superclass[ids].copy(),
        labeled_ids=np.flatnonzero(keep_labeled).astype(np.int64),
        unlabeled_ids=np.flatnonzero(~keep_labeled).astype(np.int64),
    )


def move_to_labeled(ds: Dataset, assignments: Mapping[int, int]) -> Dataset:
    """Move unlabeled ids into the labeled set with the given superclasses.

    Rejects ids that are already labeled or classes outside [0, K); on any
    rejection the input dataset is left untouched.
    """
    if not assignments:
        return ds
    labeled = set(int(i) for i in ds.labeled_ids)
    superclass = np.array(ds.superclass if ds.superclass is not None
                          else np.full(ds.n, -1, dtype=np.int64))
    for i, c in assignments.items():
        if i in labeled:
            raise SplitError(f"id {i} is already labeled")
        if not (0 <= int(i) < ds.n):
            raise SplitError(f"id {i} out of range")
        if not (0 <= int(c) < max(ds.n_classes, 1)):
            raise SplitError(f"class {c} out of range for K={ds.n_classes}")
        superclass[int(i)] = int(c)
    new_labeled = np.sort(np.concatenate(
        [ds.labeled_ids, np.fromiter(assignments, dtype=np.int64)]))
    mask = np.zeros(ds.n, dtype=bool)
    mask[new_labeled] = True
    return replace(ds, superclass=superclass,
                   labeled_ids=new_labeled,
                   unlabeled_ids=np.flatnonzero(~mask).astype(np.int64))


MNIST_ABC = Decomposition.from_members("mnist-abc", {"A": [0, 1, 9], "B": [4, 6, 8], "C": [2, 3, 5, 7]})

FASHION_SEASONS = Decomposition.from_members(
    "fashion-seasons",
    {
        # raw labels: 0 top, 1 trouser, 2 pullover, 3 dress, 4 coat,
        # 5 sandal, 6 shirt, 7 sneaker, 8 bag, 9 ankle boot
        "summer": [0, 5, 3, 6],
        "winter": [2, 4, 9],
        "all-year": [7, 1, 8],
    },
)
