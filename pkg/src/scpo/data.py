"""Loading, cleaning, splitting and normalizing tabular classification data.

Labels are stored 0-based (``0 .. C-1``) as integer arrays; ``label_names[c]``
gives the original string for code ``c``. Missing feature cells are NaN until
:func:`impute_means` fills them.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

MISSING_MARKERS = ("", "NA")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    label_names: tuple[str, ...]
    feature_names: tuple[str, ...]
    has_intercept: bool = False

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise DataError(
                f"expected {X.shape[0]} labels, got shape {y.shape}")
        if X.shape[1] != len(self.feature_names):
            raise DataError("feature_names does not match feature columns")
        if y.size and (y.min() < 0 or y.max() >= len(self.label_names)):
            raise DataError("label code outside 0..C-1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def subset(self, rows) -> "Dataset":
        return replace(self, features=self.features[rows],
                       labels=self.labels[rows])


@dataclass(frozen=True)
class Normalizer:
    """Per-column shift and scale fitted on training data.

    A zero entry in ``stds`` marks a constant column, which is only shifted.
    The intercept column (if any) carries mean 0 and std 0 and is never
    touched by :func:`apply_normalizer`.
    """

    means: np.ndarray
    stds: np.ndarray

    @property
    def scales(self) -> np.ndarray:
        return np.where(self.stds > 0, self.stds, 1.0)


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    calib_count: int
    test_count: int
    seed: int = 0


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected")
        rows = [row for row in reader if row]
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(
                f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
    return header, rows


def _parse_cell(cell: str, where: str) -> float:
    cell = cell.strip()
    if cell in MISSING_MARKERS:
        return np.nan
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"{where}: non-numeric value {cell!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{where}: non-finite value {cell!r}")
    return value


def encode_labels(raw: Sequence[str], label_names: Sequence[str] | None = None):
    """Map label strings to codes.

    Without ``label_names`` the distinct strings are sorted lexicographically.
    With ``label_names`` the given order is used and unknown strings raise.
    """
    raw = [str(v).strip() for v in raw]
    if label_names is None:
        label_names = sorted(set(raw))
        if len(label_names) < 2:
            raise DataError("fewer than 2 classes in label column")
    index = {name: code for code, name in enumerate(label_names)}
    try:
        codes = np.array([index[v] for v in raw], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"unknown label {exc.args[0]!r}") from None
    return codes, tuple(label_names)


def load_csv(path, label_column: str | None,
             label_names: Sequence[str] | None = None,
             feature_names: Sequence[str] | None = None) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`.

    Parameters
    ----------
    path : path-like
        UTF-8 comma-separated file. Empty cells and ``NA`` are missing.
    label_column : str or None
        Name of the label column. ``None`` reads an unlabeled file (all labels
        set to code 0, which requires ``label_names``).
    label_names : sequence of str, optional
        Fixed label encoding, e.g. taken from a trained model. Defaults to the
        lexicographic order of the distinct labels in the file.
    feature_names : sequence of str, optional
        Columns to use as features, in this order. Defaults to every column
        other than the label column.
    """
    header, rows = _read_rows(path)
    if label_column is not None and label_column not in header:
        raise DataError(f"label column {label_column!r} not in header")
    if feature_names is None:
        feature_names = [h for h in header if h != label_column]
    missing_cols = [f for f in feature_names if f not in header]
    if missing_cols:
        raise DataError(f"feature columns missing from {path}: {missing_cols}")
    cols = [header.index(f) for f in feature_names]

    X = np.empty((len(rows), len(cols)))
    for i, row in enumerate(rows):
        for j, c in enumerate(cols):
            X[i, j] = _parse_cell(row[c], f"{path}:{i + 2}:{header[c]}")

    if label_column is None:
        if label_names is None:
            raise DataError("unlabeled data needs explicit label_names")
        y = np.zeros(len(rows), dtype=np.int64)
        names = tuple(label_names)
    else:
        li = header.index(label_column)
        y, names = encode_labels([row[li] for row in rows], label_names)
    return Dataset(X, y, names, tuple(feature_names))


def write_csv(path, data: Dataset, label_column: str = "label") -> None:
    """Write features (without intercept) and label names back to CSV."""
    X = data.features[:, :-1] if data.has_intercept else data.features
    names = data.feature_names[:-1] if data.has_intercept else data.feature_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, label_column])
        for row, code in zip(X, data.labels):
            w.writerow([("NA" if np.isnan(v) else repr(float(v))) for v in row]
                       + [data.label_names[code]])


def drop_sparse_columns(data: Dataset, max_missing: int) -> Dataset:
    """Remove feature columns with more than ``max_missing`` missing cells."""
    keep = np.isnan(data.features).sum(axis=0) <= max_missing
    dropped = [n for n, k in zip(data.feature_names, keep) if not k]
    if dropped:
        logger.info("dropping %d sparse columns: %s", len(dropped), dropped)
    return replace(data, features=data.features[:, keep],
                   feature_names=tuple(np.asarray(data.feature_names)[keep]))


def _drop_empty_rows(data: Dataset) -> tuple[Dataset, int]:
    empty = np.isnan(data.features).all(axis=1) if data.n_features else \
        np.zeros(data.n_examples, dtype=bool)
    if not empty.any():
        return data, 0
    return data.subset(~empty), int(empty.sum())


def impute_means(train: Dataset, others: Sequence[Dataset] = ()):
    """Fill missing cells with the training-column means of observed values.

    Rows with every feature missing are dropped from all datasets first.
    Returns ``(train, others)`` with the same structure as the inputs.
    """
    train, n_dropped = _drop_empty_rows(train)
    cleaned = []
    for d in others:
        d, n = _drop_empty_rows(d)
        n_dropped += n
        cleaned.append(d)
    if n_dropped:
        logger.info("dropped %d fully-missing rows", n_dropped)

    observed = ~np.isnan(train.features)
    if train.n_examples == 0:
        raise DataError("training set is empty")
    all_missing = ~observed.any(axis=0)
    if all_missing.any():
        bad = [n for n, b in zip(train.feature_names, all_missing) if b]
        raise DataError(f"columns entirely missing in training data: {bad}")
    means = np.nanmean(train.features, axis=0)
    return fill_missing(train, means), [fill_missing(d, means) for d in cleaned]


def fill_missing(data: Dataset, values: np.ndarray) -> Dataset:
    mask = np.isnan(data.features)
    if not mask.any():
        return data
    X = np.where(mask, np.broadcast_to(values, data.features.shape),
                 data.features)
    return replace(data, features=X)


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition rows into train/calibration/test by a seeded permutation."""
    counts = (spec.train_count, spec.calib_count, spec.test_count)
    if any(c < 0 for c in counts):
        raise DataError("split counts must be non-negative")
    if sum(counts) != data.n_examples:
        raise DataError(
            f"split counts {counts} sum to {sum(counts)}, "
            f"dataset has {data.n_examples} rows")
    if spec.train_count < 1 or spec.calib_count < 1:
        raise DataError("train and calibration splits need at least 1 row")
    perm = np.random.default_rng(spec.seed).permutation(data.n_examples)
    a, b = spec.train_count, spec.train_count + spec.calib_count
    return data.subset(perm[:a]), data.subset(perm[a:b]), data.subset(perm[b:])


def fit_normalizer(train: Dataset) -> Normalizer:
    if train.n_examples == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    X = train.features
    means = X.mean(axis=0)
    if train.n_examples > 1:
        stds = X.std(axis=0, ddof=1)
    else:
        stds = np.zeros(train.n_features)
    # tolerate round-off on constant columns
    stds = np.where(stds <= 1e-12 * np.maximum(np.abs(means), 1.0), 0.0, stds)
    if train.has_intercept:
        means[-1] = 0.0
        stds[-1] = 0.0
    return Normalizer(means, stds)


def apply_normalizer(norm: Normalizer, data: Dataset) -> Dataset:
    if norm.means.shape != (data.n_features,):
        raise DataError(
            f"normalizer has {norm.means.size} columns, data has "
            f"{data.n_features}")
    X = (data.features - norm.means) / norm.scales
    if data.has_intercept:
        X[:, -1] = data.features[:, -1]
    return replace(data, features=X)


def invert_normalizer(norm: Normalizer, data: Dataset) -> Dataset:
    X = data.features * norm.scales + norm.means
    if data.has_intercept:
        X[:, -1] = data.features[:, -1]
    return replace(data, features=X)


def add_intercept(data: Dataset) -> Dataset:
    if data.has_intercept:
        raise DataError("dataset already has an intercept column")
    X = np.column_stack([data.features, np.ones(data.n_examples)])
    return replace(data, features=X,
                   feature_names=(*data.feature_names, "(intercept)"),
                   has_intercept=True)


def prepare(train: Dataset, others: Sequence[Dataset] = ()):
    """Impute, normalize on training statistics and append the intercept.

    Returns ``(normalizer, train, others)``; the normalizer refers to the
    columns after the intercept was added.
    """
    train, others = impute_means(train, others)
    train = add_intercept(train)
    others = [add_intercept(d) for d in others]
    norm = fit_normalizer(train)
    return (norm, apply_normalizer(norm, train),
            [apply_normalizer(norm, d) for d in others])


def transform_new(norm: Normalizer, data: Dataset) -> Dataset:
    """Prepare data unseen at fit time: fill gaps with training means,
    add the intercept and normalize."""
    if norm.means.shape != (data.n_features + 1,):
        raise DataError(
            f"normalizer expects {norm.means.size - 1} feature columns, data "
            f"has {data.n_features}")
    return apply_normalizer(norm, add_intercept(fill_missing(data, norm.means[:-1])))
