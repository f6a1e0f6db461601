"""Dataset ingestion, preprocessing, splitting, and synthetic generation.

Datasets are plain CSV: UTF-8, header row, comma separators, labels in a
``class`` column by default.  Categorical feature values and labels are
integer-coded in order of first appearance, and the original value strings
are kept so files round-trip.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError, InputError, SplitError

_SPLIT_RETRIES = 100


class FeatureKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    TFIDF = "tfidf"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels.

    ``n_classes`` is authoritative: split views inherit the parent's class
    space even when a view happens to miss a class.  ``row_origin`` tracks
    a view's rows in the parent (used by leakage audits).
    """

    features: np.ndarray
    labels: np.ndarray
    feature_kind: FeatureKind
    name: str
    n_classes: int
    feature_names: tuple[str, ...] = ()
    label_values: tuple[str, ...] = ()
    feature_values: tuple[tuple[str, ...], ...] = ()
    row_origin: np.ndarray | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise InputError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InputError("labels must align with feature rows")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InputError(f"labels outside [0, {self.n_classes})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def view(self, rows: np.ndarray, suffix: str) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        origin = rows if self.row_origin is None else self.row_origin[rows]
        return replace(
            self,
            features=self.features[rows],
            labels=self.labels[rows],
            name=f"{self.name}{suffix}",
            row_origin=origin,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/test split parameters; the pair (seed, repetition) keys the draw."""

    train_fraction: float = 0.6
    seed: int = 0
    repetition: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def load_csv(path, kind: FeatureKind, label_column="class", name: str | None = None) -> Dataset:
    """Parse a CSV file into a Dataset.

    Numeric and TF-IDF features are parsed as reals; categorical features
    and labels are integer-coded by first appearance.  Malformed input
    raises IngestionError naming the offending row/column.
    """
    path = Path(path)
    kind = FeatureKind(kind)
    if not path.exists():
        raise IngestionError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: empty file")
    header, data_rows = rows[0], rows[1:]
    if not data_rows:
        raise IngestionError(f"{path}: no data rows")

    if isinstance(label_column, int):
        if not 0 <= label_column < len(header):
            raise IngestionError(f"{path}: label column index {label_column} out of range")
        label_idx = label_column
    else:
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise IngestionError(f"{path}: no column named {label_column!r}") from None
    feat_idx = [j for j in range(len(header)) if j != label_idx]

    label_codes: dict[str, int] = {}
    cat_codes: list[dict[str, int]] = [{} for _ in feat_idx]
    features = np.zeros((len(data_rows), len(feat_idx)))
    labels = np.zeros(len(data_rows), dtype=np.intp)

    for i, row in enumerate(data_rows):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {i + 2}: expected {len(header)} fields, got {len(row)}")
        raw_label = row[label_idx].strip()
        if not raw_label:
            raise IngestionError(f"{path}: row {i + 2}: empty label")
        labels[i] = label_codes.setdefault(raw_label, len(label_codes))
        for col, j in enumerate(feat_idx):
            cell = row[j].strip()
            if kind is FeatureKind.CATEGORICAL:
                features[i, col] = cat_codes[col].setdefault(cell, len(cat_codes[col]))
            else:
                try:
                    features[i, col] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {i + 2}, column {header[j]!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None

    if len(label_codes) < 2:
        raise IngestionError(f"{path}: only one class present ({next(iter(label_codes))!r})")

    return Dataset(
        features=features,
        labels=labels,
        feature_kind=kind,
        name=name or path.stem,
        n_classes=len(label_codes),
        feature_names=tuple(header[j] for j in feat_idx),
        label_values=tuple(label_codes),
        feature_values=tuple(tuple(c) for c in cat_codes),
    )


def write_csv(dataset: Dataset, path) -> None:
    """Write a Dataset back to CSV so that re-loading reproduces its coding."""
    header = list(dataset.feature_names) or [f"f{j}" for j in range(dataset.d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["class"])
        for i in range(dataset.n):
            row = []
            for j in range(dataset.d):
                v = dataset.features[i, j]
                if dataset.feature_kind is FeatureKind.CATEGORICAL and dataset.feature_values:
                    row.append(dataset.feature_values[j][int(v)])
                else:
                    row.append(repr(float(v)))
            label = dataset.labels[i]
            row.append(dataset.label_values[label] if dataset.label_values else str(int(label)))
            writer.writerow(row)


def z_standardize(train_features: np.ndarray):
    """Center and scale columns to mean 0, population std 1.

    Returns the transformed matrix and the (mean, std) statistics, which
    must be applied unchanged to the test split.  Zero-variance columns map
    to all-zeros.
    """
    x = np.asarray(train_features, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return apply_standardization(x, (mean, std)), (mean, std)


def apply_standardization(features: np.ndarray, stats) -> np.ndarray:
    mean, std = stats
    safe = np.where(std == 0.0, 1.0, std)
    out = (np.asarray(features, dtype=np.float64) - mean) / safe
    return np.where(std == 0.0, 0.0, out)


def _stratified_train_counts(labels, n_classes, n_train, rng):
    # largest-remainder allocation, at least one per class
    counts = np.bincount(labels, minlength=n_classes)
    exact = counts * (n_train / labels.size)
    take = np.maximum(np.floor(exact).astype(int), 1)
    take = np.minimum(take, counts)
    while take.sum() > n_train:
        over = np.flatnonzero(take > 1)
        take[over[np.argmin((exact - take)[over])]] -= 1
    remainder = exact - take
    while take.sum() < n_train:
        room = np.flatnonzero(take < counts)
        pick = room[np.argmax(remainder[room])]
        take[pick] += 1
        remainder[pick] -= 1.0
    return take


def split(dataset: Dataset, spec: SplitSpec, stratified: bool = False):
    """Seeded random train/test split (train gets floor(fraction * N) rows).

    Plain splits are re-drawn (up to 100 times) until the training side
    covers every class; stratified splits allocate per class directly.
    """
    if dataset.n < 5:
        raise InputError(f"dataset {dataset.name!r} too small to split (n={dataset.n})")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, spec.repetition]))
    n_train = int(np.floor(spec.train_fraction * dataset.n))

    if stratified:
        take = _stratified_train_counts(dataset.labels, dataset.n_classes, n_train, rng)
        train_rows = []
        for cls in range(dataset.n_classes):
            members = rng.permutation(np.flatnonzero(dataset.labels == cls))
            train_rows.append(members[: take[cls]])
        train_idx = rng.permutation(np.concatenate(train_rows))
        mask = np.ones(dataset.n, dtype=bool)
        mask[train_idx] = False
        test_idx = np.flatnonzero(mask)
        return dataset.view(train_idx, "[train]"), dataset.view(test_idx, "[test]")

    for _ in range(_SPLIT_RETRIES):
        perm = rng.permutation(dataset.n)
        train_idx = perm[:n_train]
        if np.unique(dataset.labels[train_idx]).size == dataset.n_classes:
            return dataset.view(train_idx, "[train]"), dataset.view(perm[n_train:], "[test]")
    raise SplitError(
        f"no class-covering split of {dataset.name!r} after {_SPLIT_RETRIES} draws "
        f"(train_fraction={spec.train_fraction})"
    )


def synthetic_blobs(n: int, classes: int, seed: int) -> Dataset:
    """Balanced 2-D Gaussian clusters, one per class, centers on a circle."""
    if classes < 2:
        raise InputError("need at least 2 classes")
    if n < classes:
        raise InputError(f"need at least one instance per class ({n} < {classes})")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    counts = [n // classes + (1 if k < n % classes else 0) for k in range(classes)]
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers = 5.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    features = np.concatenate(
        [rng.normal(loc=centers[k], scale=1.0, size=(counts[k], 2)) for k in range(classes)]
    )
    labels = np.concatenate([np.full(counts[k], k, dtype=np.intp) for k in range(classes)])
    order = rng.permutation(n)
    return Dataset(
        features=features[order],
        labels=labels[order],
        feature_kind=FeatureKind.NUMERIC,
        name=f"blobs-n{n}-c{classes}",
        n_classes=classes,
        feature_names=("x0", "x1"),
    )


def packaged_data_dir() -> Path:
    return Path(resources.files("al_lab").joinpath("datasets"))


def load_manifest(path=None) -> list[dict]:
    """Dataset manifest: JSON array of {name, path, kind, n, d, c}.

    Entries with a null path are metadata only (no local file shipped);
    selecting them for a run is a configuration error.
    """
    manifest_path = Path(path) if path else packaged_data_dir() / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        entries = json.load(fh)
    for entry in entries:
        entry["_base"] = manifest_path.parent
    return entries


def dataset_from_manifest(entry: dict, label_column="class") -> Dataset:
    if not entry.get("path"):
        # metadata-only entry: honour a drop-in file named after the dataset
        drop_in = Path(entry["_base"]) / f"{entry['name']}.csv"
        if drop_in.exists():
            entry = dict(entry, path=drop_in.name)
        else:
            raise ConfigError(
                f"dataset {entry['name']!r} has no bundled file; place {entry['name']}.csv "
                f"next to the manifest (or set the entry's 'path')"
            )
    path = Path(entry["_base"]) / entry["path"] if not Path(entry["path"]).is_absolute() else Path(entry["path"])
    ds = load_csv(path, FeatureKind(entry["kind"]), label_column=label_column, name=entry["name"])
    expected = (entry.get("n"), entry.get("d"), entry.get("c"))
    actual = (ds.n, ds.d, ds.n_classes)
    for exp, act, what in zip(expected, actual, ("rows", "features", "classes")):
        if exp is not None and exp != act:
            raise ConfigError(f"dataset {entry['name']!r}: manifest says {exp} {what}, file has {act}")
    return ds
