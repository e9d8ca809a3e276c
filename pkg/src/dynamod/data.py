"""Dataset representation, CSV ingestion, cost vectors, splits, and the
4-cluster synthetic generator used throughout the tests and demos."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(Exception):
    """Raised for malformed input files or invalid split requests."""


@dataclass(frozen=True)
class Dataset:
    """Dense feature matrix with {-1,+1} labels.

    Immutable after construction; safe to share read-only across workers.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("X must be a non-empty 2-d matrix")
        if y.shape != (X.shape[0],):
            raise DataError("y length must match rows of X")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains NaN or Inf")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length must match columns of X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path) -> None:
        """Write `f1,...,fd,label` with full round-trip float precision."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.feature_names) + ["label"])
            for i in range(self.n):
                writer.writerow([repr(float(v)) for v in self.X[i]] + [str(int(self.y[i]))])


@dataclass(frozen=True)
class CostVector:
    """Nonnegative per-feature acquisition costs; total is the full-model cost."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or len(c) < 1:
            raise DataError("costs must be a non-empty 1-d array")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise DataError("costs must be finite and nonnegative")
        if c.sum() <= 0:
            raise DataError("total cost must be positive")
        object.__setattr__(self, "c", c)

    @property
    def total(self) -> float:
        return float(self.c.sum())

    @classmethod
    def unit(cls, d: int) -> "CostVector":
        return cls(np.ones(d))


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float]
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(f <= 0 for f in fr):
            raise DataError("fractions must be three positive numbers")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise DataError("fractions must sum to 1")
        object.__setattr__(self, "fractions", fr)


def load_csv(path, label_column: str = "label") -> Dataset:
    """Load a comma-delimited, headered dataset.

    Labels may be {-1,+1} or {0,1}; 0 is mapped to -1. Parse failures report
    the 1-based data row and the offending column name.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: no column named '{label_column}'")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        rows: list[list[float]] = []
        labels: list[float] = []
        for r, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} cells, expected {len(header)}")
            feats = []
            for i, cell in enumerate(rec):
                name = header[i]
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"{path}: unparseable cell at row {r}, column '{name}'") from None
                if i == label_idx:
                    if value == 0.0:
                        value = -1.0
                    if value not in (-1.0, 1.0):
                        raise DataError(f"{path}: row {r}: label {cell!r} outside {{-1,0,1}}")
                    labels.append(value)
                else:
                    feats.append(value)
            rows.append(feats)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels), tuple(feature_names))


def load_costs(path, feature_names) -> CostVector:
    """Load a `feature,cost` CSV aligned to feature_names; unit costs if path is None."""
    names = list(feature_names)
    if path is None:
        return CostVector.unit(len(names))
    path = Path(path)
    if not path.exists():
        raise DataError(f"cost file not found: {path}")
    table: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["feature", "cost"]:
            raise DataError(f"{path}: expected header 'feature,cost'")
        for rec in reader:
            if not rec:
                continue
            name = rec[0].strip()
            if name not in names:
                raise DataError(f"{path}: unknown feature '{name}'")
            try:
                cost = float(rec[1])
            except ValueError:
                raise DataError(f"{path}: unparseable cost for feature '{name}'") from None
            if cost < 0:
                raise DataError(f"{path}: negative cost for feature '{name}'")
            table[name] = cost
    missing = [n for n in names if n not in table]
    if missing:
        raise DataError(f"{path}: missing cost for feature '{missing[0]}'")
    return CostVector(np.array([table[n] for n in names]))


# Cluster layout of the 2-d synthetic task: two clusters share the top row
# (only the vertical coordinate cannot separate them) and two stack on the
# left column. Labels alternate so the optimum needs feature 2 plus routing.
_SYNTH_CENTERS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (-1.0, -3.0))
_SYNTH_SIZES = (20, 20, 15, 15)
_SYNTH_LABELS = (-1.0, 1.0, -1.0, 1.0)
_SYNTH_NOISE = 0.01


def gen_synthetic(seed: int) -> Dataset:
    """70-example, 2-feature clustered dataset; deterministic given seed."""
    rng = np.random.default_rng(seed)
    blocks = []
    labels = []
    for center, size, label in zip(_SYNTH_CENTERS, _SYNTH_SIZES, _SYNTH_LABELS):
        blocks.append(np.asarray(center) + _SYNTH_NOISE * rng.standard_normal((size, 2)))
        labels.append(np.full(size, label))
    return Dataset(np.vstack(blocks), np.concatenate(labels), ("f1", "f2"))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint train/val/test partition via a seed-determined permutation."""
    n = ds.n
    n_train = int(round(spec.fractions[0] * n))
    n_val = int(round(spec.fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"fractions {spec.fractions} leave an empty split for n={n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return tuple(Dataset(ds.X[idx], ds.y[idx], ds.feature_names) for idx in parts)
