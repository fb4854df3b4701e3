"""Sparse functional datasets: containers, long-CSV I/O, sparsification and splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from os import PathLike
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DataError,
    DuplicateObservationError,
    InsufficientObservationsError,
    LabelMissingError,
    ParseError,
    SchemaError,
)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SparseCurve:
    """Irregularly observed values of one subject."""

    id: str
    times: np.ndarray
    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        times = _frozen(self.times).ravel()
        values = _frozen(self.values).ravel()
        if times.size == 0:
            raise DataError(f"curve {self.id!r} has no observations")
        if times.size != values.size:
            raise DataError(f"curve {self.id!r}: {times.size} times but {values.size} values")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise DataError(f"curve {self.id!r} contains non-finite entries")
        if np.any(np.diff(times) <= 0):
            raise DataError(f"curve {self.id!r}: times must be strictly ascending")
        if self.label is not None and self.label not in (0, 1):
            raise DataError(f"curve {self.id!r}: label must be 0, 1 or None, got {self.label!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    def __len__(self) -> int:
        return self.times.size

    def same_as(self, other: SparseCurve) -> bool:
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    curves: tuple[SparseCurve, ...]
    domain: tuple[float, float]

    def __post_init__(self):
        curves = tuple(self.curves)
        if not curves:
            raise DataError("dataset must contain at least one curve")
        lo, hi = (float(v) for v in self.domain)
        if not lo < hi:
            raise DataError(f"domain must satisfy lo < hi, got {self.domain}")
        for c in curves:
            if c.times[0] < lo or c.times[-1] > hi:
                raise DataError(f"curve {c.id!r} has times outside domain [{lo}, {hi}]")
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "domain", (lo, hi))

    @classmethod
    def from_curves(cls, curves: Sequence[SparseCurve], domain=None) -> FunctionalDataset:
        if domain is None:
            domain = (min(c.times[0] for c in curves), max(c.times[-1] for c in curves))
        return cls(tuple(curves), domain)

    def __len__(self) -> int:
        return len(self.curves)

    def __iter__(self) -> Iterator[SparseCurve]:
        return iter(self.curves)

    def __getitem__(self, i: int) -> SparseCurve:
        return self.curves[i]

    @property
    def is_labeled(self) -> bool:
        return all(c.label is not None for c in self.curves)

    @cached_property
    def labels(self) -> np.ndarray:
        missing = [c.id for c in self.curves if c.label is None]
        if missing:
            raise LabelMissingError(f"{len(missing)} curve(s) have no label, e.g. {missing[0]!r}")
        out = np.array([c.label for c in self.curves], dtype=np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def n_obs(self) -> np.ndarray:
        return np.array([len(c) for c in self.curves], dtype=np.int64)

    @cached_property
    def pooled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated (times, values, curve index) over all curves."""
        t = np.concatenate([c.times for c in self.curves])
        z = np.concatenate([c.values for c in self.curves])
        idx = np.repeat(np.arange(len(self.curves)), self.n_obs)
        return t, z, idx

    def subset(self, indices) -> FunctionalDataset:
        """Curves at ``indices`` (repeats allowed, e.g. for bootstrap resamples)."""
        return FunctionalDataset(tuple(self.curves[int(i)] for i in indices), self.domain)

    def same_as(self, other: FunctionalDataset) -> bool:
        return (
            self.domain == other.domain
            and len(self) == len(other)
            and all(a.same_as(b) for a, b in zip(self.curves, other.curves))
        )


@dataclass(frozen=True)
class CsvSchema:
    id: str = "id"
    time: str = "time"
    value: str = "value"
    label: str = "label"


def load_long_csv(
    path: str | PathLike,
    schema: CsvSchema = CsvSchema(),
    domain: tuple[float, float] | None = None,
) -> FunctionalDataset:
    """Read a long-format CSV (one row per observation) into a dataset.

    Rows are grouped by id in order of first appearance and sorted by time
    within each curve. The label column is optional; if present every row
    of a curve must carry the same label (blank means unlabeled).
    """
    rows: dict[str, list[tuple[float, float]]] = {}
    labels: dict[str, int | None] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.id, schema.time, schema.value):
            if col not in header:
                raise SchemaError(f"missing column {col!r}; header is {header}")
        has_label = schema.label in header
        for rowno, row in enumerate(reader, start=2):
            cid = row[schema.id]
            try:
                t = float(row[schema.time])
                z = float(row[schema.value])
            except (TypeError, ValueError):
                raise ParseError(
                    f"non-numeric time/value ({row[schema.time]!r}, {row[schema.value]!r})", rowno
                ) from None
            if not (math.isfinite(t) and math.isfinite(z)):
                raise ParseError("non-finite time/value", rowno)
            lab = None
            if has_label:
                raw = (row[schema.label] or "").strip()
                if raw:
                    try:
                        lab = int(float(raw))
                    except ValueError:
                        raise ParseError(f"label {raw!r} is not 0/1", rowno) from None
                    if lab not in (0, 1) or float(raw) != lab:
                        raise ParseError(f"label {raw!r} is not 0/1", rowno)
            if cid in labels and labels[cid] != lab:
                raise ParseError(f"curve {cid!r} has inconsistent labels", rowno)
            labels[cid] = lab
            rows.setdefault(cid, []).append((t, z))
    if not rows:
        raise DataError(f"{path}: no data rows")

    curves = []
    for cid, obs in rows.items():
        obs.sort(key=lambda p: p[0])
        times = [p[0] for p in obs]
        for a, b in zip(times, times[1:]):
            if a == b:
                raise DuplicateObservationError(f"curve {cid!r} has two observations at time {a}")
        curves.append(SparseCurve(cid, times, [p[1] for p in obs], labels[cid]))
    return FunctionalDataset.from_curves(curves, domain)


def write_long_csv(dataset: FunctionalDataset, path: str | PathLike) -> None:
    """Write ``dataset`` in long format; floats use repr so reloading is exact."""
    labeled = any(c.label is not None for c in dataset)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "time", "value", "label"] if labeled else ["id", "time", "value"])
        for c in dataset:
            for t, z in zip(c.times, c.values):
                row = [c.id, repr(float(t)), repr(float(z))]
                if labeled:
                    row.append("" if c.label is None else str(c.label))
                w.writerow(row)


def sparsify(dataset: FunctionalDataset, n_obs_range: tuple[int, int], seed: int) -> FunctionalDataset:
    """Keep a random subset of each curve's observations.

    Each curve retains ``n_i ~ Uniform{lo..hi}`` of its own time points,
    drawn without replacement, original order kept.
    """
    lo, hi = (int(v) for v in n_obs_range)
    if lo < 1 or hi < lo:
        raise DataError(f"invalid observation range [{lo}, {hi}]")
    short = [c.id for c in dataset if len(c) < hi]
    if short:
        raise InsufficientObservationsError(
            f"{len(short)} curve(s) have fewer than {hi} observations, e.g. {short[0]!r}"
        )
    rng = np.random.default_rng(seed)
    out = []
    for c in dataset:
        m = int(rng.integers(lo, hi + 1))
        keep = np.sort(rng.choice(len(c), size=m, replace=False))
        out.append(SparseCurve(c.id, c.times[keep], c.values[keep], c.label))
    return FunctionalDataset(tuple(out), dataset.domain)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(dataset: FunctionalDataset, spec: SplitSpec) -> tuple[FunctionalDataset, FunctionalDataset]:
    """Stratified random train/test partition.

    The train set has ``round(train_fraction * n)`` curves; the per-class
    allocation is proportional (largest remainder) so both classes appear
    on both sides whenever a class has at least two curves.
    """
    y = dataset.labels
    n = len(dataset)
    n_train = _round_half_up(spec.train_fraction * n)
    if n_train < 1 or n_train > n - 1:
        raise DataError(f"train_fraction={spec.train_fraction} leaves an empty side for n={n}")

    classes = [np.flatnonzero(y == k) for k in (0, 1)]
    classes = [c for c in classes if c.size]
    exact = [spec.train_fraction * c.size for c in classes]
    alloc = [int(math.floor(e)) for e in exact]
    # keep at least one curve of each class on each side where possible
    lo = [1 if c.size >= 2 else 0 for c in classes]
    hi = [c.size - 1 if c.size >= 2 else c.size for c in classes]
    alloc = [min(max(a, l), h) for a, l, h in zip(alloc, lo, hi)]
    if not sum(lo) <= n_train <= sum(hi):
        lo, hi = [0] * len(classes), [c.size for c in classes]
    order = sorted(range(len(classes)), key=lambda j: -(exact[j] - math.floor(exact[j])))
    while sum(alloc) < n_train:
        for j in order:
            if sum(alloc) < n_train and alloc[j] < hi[j]:
                alloc[j] += 1
    while sum(alloc) > n_train:
        for j in reversed(order):
            if sum(alloc) > n_train and alloc[j] > lo[j]:
                alloc[j] -= 1

    rng = np.random.default_rng(spec.seed)
    train_idx = []
    for c, a in zip(classes, alloc):
        train_idx.extend(rng.permutation(c)[:a].tolist())
    mask = np.zeros(n, dtype=bool)
    mask[train_idx] = True
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(np.flatnonzero(~mask))
