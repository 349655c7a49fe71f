"""Per-subject branching-angle tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..codes import CodeError, parse_angle

CONTROL, ASD = 0, 1


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    """Subjects by angle codes.  ``labels`` holds 0 (control) or 1 (ASD)."""

    subject_ids: list[str]
    labels: np.ndarray
    features: np.ndarray
    codes: list[str]

    def __post_init__(self):
        self.subject_ids = [str(s) for s in self.subject_ids]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.codes = [str(c) for c in self.codes]
        n = len(self.subject_ids)
        if self.features.ndim != 2 or self.features.shape != (n, len(self.codes)):
            raise DatasetError("feature matrix shape does not match subjects and codes")
        if self.labels.shape != (n,):
            raise DatasetError("one label per subject required")
        if n < 2:
            raise DatasetError("at least two subjects required")
        if not np.isin(self.labels, (CONTROL, ASD)).all():
            raise DatasetError("labels must be 0 (control) or 1 (ASD)")
        if not np.isfinite(self.features).all():
            raise DatasetError("missing or non-finite angle values")
        if len(set(self.codes)) != len(self.codes):
            raise DatasetError("duplicate angle columns")
        for c in self.codes:
            try:
                parse_angle(c)
            except CodeError as exc:
                raise DatasetError(str(exc)) from exc

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def class_counts(self) -> tuple[int, int]:
        pos = int(self.labels.sum())
        return self.n - pos, pos

    def columns(self, codes) -> np.ndarray:
        """Feature columns for ``codes`` in the given order."""
        index = {c: i for i, c in enumerate(self.codes)}
        missing = [str(c) for c in codes if str(c) not in index]
        if missing:
            raise DatasetError(f"dataset lacks angle columns: {', '.join(missing)}")
        return self.features[:, [index[str(c)] for c in codes]]

    def select(self, codes) -> "Dataset":
        return Dataset(self.subject_ids, self.labels, self.columns(codes), [str(c) for c in codes])


def read_dataset(path) -> Dataset:
    """Read ``subject_id,label,<angle codes...>`` CSV."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "subject_id" or header[1] != "label":
            raise DatasetError(f"{path}: header must start with subject_id,label")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0])
            try:
                labels.append(int(row[1]))
                vals = [float(v) if v.strip() else math.nan for v in row[2:]]
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no subjects")
    return Dataset(ids, np.array(labels), np.array(rows), header[2:])


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label", *dataset.codes])
        for sid, lab, row in zip(dataset.subject_ids, dataset.labels, dataset.features):
            w.writerow([sid, int(lab), *(repr(float(v)) for v in row)])


def planted_dataset(codes, informative=(0, 1), n: int = 54, n_positive: int | None = None,
                    gap_sd: float = 2.0, mean_deg: float = 40.0, sd_deg: float = 8.0, seed: int = 0) -> Dataset:
    """Synthetic angles: independent Gaussian columns, with the class means of
    the ``informative`` columns ``gap_sd`` standard deviations apart."""
    rng = np.random.default_rng(seed)
    codes = [str(c) for c in codes]
    if n_positive is None:
        n_positive = (n + 1) // 2
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_positive] = ASD
    labels = rng.permutation(labels)
    X = rng.normal(mean_deg, sd_deg, size=(n, len(codes)))
    for j in informative:
        X[labels == ASD, j] += gap_sd * sd_deg
    ids = [f"S{i + 1:03d}" for i in range(n)]
    return Dataset(ids, labels, X, codes)
