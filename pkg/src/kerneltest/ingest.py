"""Loading, validating and normalizing two-condition observation matrices.

Matrix files are CSV or TSV (delimiter picked from the extension) with a
header ``cell_id,<feature1>,...`` and one row per cell.  Label files have
two columns ``cell_id,condition`` and a header.  Floats are written with 17
significant digits so that a load/write/load cycle is bit-exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "IngestError",
    "Dataset",
    "Sample",
    "load_dataset",
    "read_labels",
    "check_conditions",
    "write_dataset",
    "write_labels",
    "log_normalize",
    "split_conditions",
    "pool",
]


class IngestError(ValueError):
    """Raised when an input file or dataset violates the input contract."""


@dataclass(frozen=True)
class Dataset:
    """Cells x features matrix with per-cell condition labels.

    ``feature_categories`` and ``feature_dropout`` are optional feature
    metadata (ground-truth tags and known dropout rates of simulated data).
    """

    values: np.ndarray
    cell_ids: list[str]
    feature_names: list[str]
    labels: list[str]
    feature_categories: list[str] | None = None
    feature_dropout: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise IngestError("values must be a 2-D matrix")
        object.__setattr__(self, "values", values)
        n, g = values.shape
        if len(self.cell_ids) != n or len(self.labels) != n:
            raise IngestError(
                f"row count {n} does not match cell_ids ({len(self.cell_ids)}) "
                f"or labels ({len(self.labels)})"
            )
        if len(self.feature_names) != g:
            raise IngestError(
                f"column count {g} does not match feature names ({len(self.feature_names)})"
            )
        if len(set(self.feature_names)) != g:
            raise IngestError("duplicate feature names")
        if len(set(self.cell_ids)) != n:
            raise IngestError("duplicate cell ids")
        if not np.all(np.isfinite(values)):
            raise IngestError("matrix contains NaN or Inf")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def conditions(self) -> list[str]:
        """Distinct condition tags in lexicographic order."""
        return sorted(set(self.labels))

    def subset_conditions(self, tags: Sequence[str]) -> "Dataset":
        keep = [i for i, lab in enumerate(self.labels) if lab in set(tags)]
        return replace(
            self,
            values=self.values[keep],
            cell_ids=[self.cell_ids[i] for i in keep],
            labels=[self.labels[i] for i in keep],
        )

    def feature(self, j: int) -> "Dataset":
        """Single-feature view, keeping labels."""
        return replace(
            self,
            values=self.values[:, [j]],
            feature_names=[self.feature_names[j]],
            feature_categories=(
                None if self.feature_categories is None else [self.feature_categories[j]]
            ),
            feature_dropout=(
                None if self.feature_dropout is None else self.feature_dropout[[j]]
            ),
        )


@dataclass(frozen=True)
class Sample:
    """Rows of one condition, in input order."""

    values: np.ndarray
    cell_ids: list[str]
    condition: str

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _delimiter(path: Path) -> str:
    return "\t" if path.suffix.lower() in {".tsv", ".tab", ".txt"} else ","


def _read_rows(path: Path) -> list[list[str]]:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh, delimiter=_delimiter(path)) if row]
    if not rows:
        raise IngestError(f"empty file: {path}")
    return rows


def read_labels(labels_path: str | Path) -> dict[str, str]:
    rows = _read_rows(Path(labels_path))
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise IngestError("labels file needs a header with columns cell_id,condition")
    mapping: dict[str, str] = {}
    for row in body:
        if len(row) < 2:
            raise IngestError(f"malformed labels row: {row!r}")
        cid, tag = row[0].strip(), row[1].strip()
        if cid in mapping and mapping[cid] != tag:
            raise IngestError(f"conflicting labels for cell {cid!r}")
        mapping[cid] = tag
    return mapping


def load_dataset(
    matrix_path: str | Path,
    labels_path: str | Path,
    two_sample: bool = True,
    min_cells: int = 1,
) -> Dataset:
    """Read a matrix file and a labels file into a :class:`Dataset`.

    Rows keep the order of the matrix file.  When ``two_sample`` is true the
    labels must contain exactly two conditions; otherwise at least two.
    Every condition must have at least ``min_cells`` cells (testing needs 2).
    """
    rows = _read_rows(Path(matrix_path))
    header, body = rows[0], rows[1:]
    features = [h.strip() for h in header[1:]]
    if not features:
        raise IngestError("matrix header has no feature columns")
    if len(set(features)) != len(features):
        raise IngestError("duplicate feature names")
    labels_map = read_labels(labels_path)

    cell_ids, labels = [], []
    values = np.empty((len(body), len(features)), dtype=np.float64)
    for i, row in enumerate(body):
        if len(row) != len(features) + 1:
            raise IngestError(f"row {i + 1} has {len(row) - 1} values, expected {len(features)}")
        cid = row[0].strip()
        if cid not in labels_map:
            raise IngestError(f"unlabeled cell: {cid!r}")
        try:
            values[i] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise IngestError(f"non-numeric value in row {cid!r}: {exc}") from None
        cell_ids.append(cid)
        labels.append(labels_map[cid])

    data = Dataset(values, cell_ids, features, labels)
    check_conditions(data.labels, two_sample, min_cells)
    return data


def check_conditions(labels: Sequence[str], two_sample: bool = True, min_cells: int = 2) -> None:
    tags = sorted(set(labels))
    if len(tags) < 2:
        raise IngestError(f"need at least two conditions, found {tags}")
    if two_sample and len(tags) > 2:
        raise IngestError(f"two-sample test requested but found {len(tags)} conditions: {tags}")
    for tag in tags:
        count = sum(1 for lab in labels if lab == tag)
        if count < min_cells:
            raise IngestError(
                f"condition {tag!r} has {count} cell(s); at least {min_cells} required"
            )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(d: Dataset, matrix_path: str | Path, labels_path: str | Path | None = None):
    """Write ``d`` in the matrix (and optionally labels) file format."""
    matrix_path = Path(matrix_path)
    with open(matrix_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=_delimiter(matrix_path), lineterminator="\n")
        w.writerow(["cell_id", *d.feature_names])
        for cid, row in zip(d.cell_ids, d.values):
            w.writerow([cid, *(_fmt(v) for v in row)])
    if labels_path is not None:
        write_labels(d, labels_path)


def write_labels(d: Dataset, labels_path: str | Path):
    labels_path = Path(labels_path)
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=_delimiter(labels_path), lineterminator="\n")
        w.writerow(["cell_id", "condition"])
        w.writerows(zip(d.cell_ids, d.labels))


def log_normalize(d: Dataset) -> Dataset:
    """Replace every value x by log(1 + x)."""
    if np.any(d.values < 0):
        raise IngestError("log_normalize requires nonnegative values")
    return replace(d, values=np.log1p(d.values))


def split_conditions(d: Dataset, order: Sequence[str] | None = None) -> tuple[Sample, Sample]:
    """Split into (condition 1, condition 2) samples.

    Condition 1 is the lexicographically smaller tag unless ``order`` gives
    the two tags explicitly.  Within-condition row order is preserved.
    """
    tags = sorted(set(d.labels))
    if order is not None:
        order = list(order)
        if len(order) != 2 or set(order) != set(tags):
            raise IngestError(f"condition order {order} does not match labels {tags}")
        tags = order
    if len(tags) != 2:
        raise IngestError(f"expected exactly two conditions, found {tags}")
    samples = []
    for tag in tags:
        idx = [i for i, lab in enumerate(d.labels) if lab == tag]
        if not idx:
            raise IngestError(f"condition {tag!r} is empty")
        samples.append(Sample(d.values[idx], [d.cell_ids[i] for i in idx], tag))
    return samples[0], samples[1]


def pool(s1: Sample, s2: Sample) -> tuple[np.ndarray, int]:
    """Stack two samples (condition 1 first); returns the matrix and n1."""
    return np.vstack([s1.values, s2.values]), s1.n
