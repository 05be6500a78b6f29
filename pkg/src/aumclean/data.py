"""Dataset model, synthetic generation, label-noise injection, CSV I/O.

A Dataset is a list of Samples plus class/feature counts and a free-text
provenance string. Samples are treated as immutable after construction;
all stochastic operations take explicit seeds and are reproducible
bit-for-bit (PRNG is numpy's default_rng, PCG64, for the whole package).

CSV schema (UTF-8, LF endings):

    id,assigned_label,true_label,f0,...,f{d-1}

``true_label`` holds the sentinel -1 when ground truth is absent. Floats are
printed as their shortest round-trip decimal. The file carries no class
count; readers infer c = 1 + max observed label unless told otherwise.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import InvalidArgumentError, ParseError

__all__ = [
    "Sample",
    "Dataset",
    "NoiseSpec",
    "generate_synthetic",
    "corrupt_uniform",
    "corrupt_asymmetric",
    "split_holdout",
    "read_csv",
    "write_csv",
]


@dataclass(frozen=True, eq=False)
class Sample:
    id: int
    features: np.ndarray
    assigned_label: int
    true_label: int | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.id == other.id
                and self.assigned_label == other.assigned_label
                and self.true_label == other.true_label
                and np.array_equal(self.features, other.features))

    def __hash__(self) -> int:
        return hash(self.id)


@dataclass(eq=False)
class Dataset:
    samples: list[Sample]
    num_classes: int
    feature_dim: int
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise InvalidArgumentError(f"need at least 2 classes, got {self.num_classes}")
        if not self.samples:
            raise InvalidArgumentError("dataset must contain at least one sample")
        seen: set[int] = set()
        for s in self.samples:
            if s.id < 0:
                raise InvalidArgumentError(f"sample id {s.id} is negative")
            if s.id in seen:
                raise InvalidArgumentError(f"duplicate sample id {s.id}")
            seen.add(s.id)
            if s.features.shape != (self.feature_dim,):
                raise InvalidArgumentError(
                    f"sample {s.id}: feature shape {s.features.shape} != ({self.feature_dim},)")
            if not np.all(np.isfinite(s.features)):
                raise InvalidArgumentError(f"sample {s.id}: non-finite feature")
            if not (0 <= s.assigned_label < self.num_classes):
                raise InvalidArgumentError(
                    f"sample {s.id}: assigned_label {s.assigned_label} out of range [0, {self.num_classes})")
            if s.true_label is not None and not (0 <= s.true_label < self.num_classes):
                raise InvalidArgumentError(
                    f"sample {s.id}: true_label {s.true_label} out of range [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __eq__(self, other: object) -> bool:
        # provenance is lineage metadata, not data; it does not affect equality
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and self.feature_dim == other.feature_dim
                and self.samples == other.samples)

    def has_true_labels(self) -> bool:
        return all(s.true_label is not None for s in self.samples)

    def ids(self) -> np.ndarray:
        return np.array([s.id for s in self.samples], dtype=np.int64)

    def features_matrix(self) -> np.ndarray:
        """All features stacked into an (N, d) float64 array, sample order."""
        return np.stack([s.features for s in self.samples]).astype(np.float64, copy=False)

    def assigned_labels(self) -> np.ndarray:
        return np.array([s.assigned_label for s in self.samples], dtype=np.int64)

    def true_labels(self) -> np.ndarray:
        """True labels with -1 standing in for absent ground truth."""
        return np.array([-1 if s.true_label is None else s.true_label
                         for s in self.samples], dtype=np.int64)

    def by_id(self) -> dict[int, Sample]:
        return {s.id: s for s in self.samples}

    def digest(self) -> str:
        """sha256 of the canonical CSV serialization (provenance excluded)."""
        buf = io.StringIO()
        _write_csv_stream(self, buf)
        return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class NoiseSpec:
    """Which label-noise model to apply, at what rate, under which seed."""

    model: str
    rate: float
    seed: int

    def __post_init__(self) -> None:
        if self.model not in ("uniform", "asymmetric"):
            raise InvalidArgumentError(f"unknown noise model {self.model!r}")
        if not (0.0 <= self.rate <= 1.0):
            raise InvalidArgumentError(f"noise rate must be in [0, 1], got {self.rate}")

    def apply(self, ds: Dataset) -> Dataset:
        fn = corrupt_uniform if self.model == "uniform" else corrupt_asymmetric
        return fn(ds, self.rate, self.seed)


def generate_synthetic(c: int, d: int, n_per_class: int, spread: float, seed: int) -> Dataset:
    """c isotropic Gaussian clusters, means equally spaced on the unit circle.

    Means live in the first two feature dimensions (zeros elsewhere). spread
    is the RMS distance of a sample from its class mean, so the
    per-coordinate standard deviation is spread / sqrt(d); spread=0
    degenerates to every sample sitting exactly on its mean. Samples are
    numbered 0..N-1 in class order and carry true_label = assigned_label.
    """
    if c < 2 or d < 2 or n_per_class < 1:
        raise InvalidArgumentError(
            f"need c >= 2, d >= 2, n_per_class >= 1; got c={c}, d={d}, n_per_class={n_per_class}")
    if spread < 0:
        raise InvalidArgumentError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    n_total = c * n_per_class
    means = np.zeros((c, d))
    angles = 2.0 * np.pi * np.arange(c) / c
    means[:, 0] = np.cos(angles)
    means[:, 1] = np.sin(angles)
    sigma = spread / math.sqrt(d)
    feats = np.repeat(means, n_per_class, axis=0) + sigma * rng.standard_normal((n_total, d))
    samples = [Sample(id=i, features=feats[i], assigned_label=i // n_per_class,
                      true_label=i // n_per_class)
               for i in range(n_total)]
    prov = f"synthetic(c={c}, d={d}, n_per_class={n_per_class}, spread={spread}, seed={seed})"
    return Dataset(samples=samples, num_classes=c, feature_dim=d, provenance=prov)


def _require_truth(ds: Dataset, op: str) -> None:
    for s in ds.samples:
        if s.true_label is None:
            raise InvalidArgumentError(f"{op} needs true_label on every sample; sample {s.id} has none")


def corrupt_uniform(ds: Dataset, p: float, seed: int) -> Dataset:
    """Flip each label with probability p to a uniformly random wrong class.

    The true class is excluded from the draw, so every flip is a genuine
    mislabel and the expected mislabeled fraction equals p exactly. Only
    assigned_label changes; ids, features, and true_label are untouched.
    """
    _require_truth(ds, "corrupt_uniform")
    if not (0.0 <= p <= 1.0):
        raise InvalidArgumentError(f"noise rate must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    n = len(ds)
    c = ds.num_classes
    selected = rng.random(n) < p
    # draw from c-1 slots, then skip past the true class
    offsets = rng.integers(0, c - 1, size=n)
    out = []
    for s, hit, k in zip(ds.samples, selected, offsets):
        if hit:
            wrong = int(k) + (1 if int(k) >= s.true_label else 0)
            out.append(replace(s, assigned_label=wrong))
        else:
            out.append(replace(s, assigned_label=s.true_label))
    prov = f"corrupt_uniform(p={p}, seed={seed}) <- {ds.provenance}"
    return Dataset(samples=out, num_classes=c, feature_dim=ds.feature_dim, provenance=prov)


def corrupt_asymmetric(ds: Dataset, p: float, seed: int) -> Dataset:
    """Flip each label with probability p to the next class, (true+1) mod c."""
    _require_truth(ds, "corrupt_asymmetric")
    if not (0.0 <= p <= 1.0):
        raise InvalidArgumentError(f"noise rate must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    c = ds.num_classes
    selected = rng.random(len(ds)) < p
    out = []
    for s, hit in zip(ds.samples, selected):
        label = (s.true_label + 1) % c if hit else s.true_label
        out.append(replace(s, assigned_label=label))
    prov = f"corrupt_asymmetric(p={p}, seed={seed}) <- {ds.provenance}"
    return Dataset(samples=out, num_classes=c, feature_dim=ds.feature_dim, provenance=prov)


def split_holdout(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint (train, test) partition, stratified and seeded.

    Stratifies by true_label when every sample has one, else by
    assigned_label. Within each stratum ids are sorted before the seeded
    shuffle, so the split depends only on ids, not input order.
    """
    if not (0.0 < test_fraction < 1.0):
        raise InvalidArgumentError(f"test_fraction must be in (0, 1), got {test_fraction}")
    key = (lambda s: s.true_label) if ds.has_true_labels() else (lambda s: s.assigned_label)
    strata: dict[int, list[Sample]] = {}
    for s in ds.samples:
        strata.setdefault(key(s), []).append(s)
    rng = np.random.default_rng(seed)
    test_ids: set[int] = set()
    for label in sorted(strata):
        members = sorted(strata[label], key=lambda s: s.id)
        k = int(round(test_fraction * len(members)))
        order = rng.permutation(len(members))
        test_ids.update(members[i].id for i in order[:k])
    train = [s for s in ds.samples if s.id not in test_ids]
    test = [s for s in ds.samples if s.id in test_ids]
    if not train or not test:
        raise InvalidArgumentError(
            f"test_fraction={test_fraction} leaves an empty part (N={len(ds)})")
    mk = lambda part, tag: Dataset(
        samples=part, num_classes=ds.num_classes, feature_dim=ds.feature_dim,
        provenance=f"split_holdout({tag}, test_fraction={test_fraction}, seed={seed}) <- {ds.provenance}")
    return mk(train, "train"), mk(test, "test")


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def _write_csv_stream(ds: Dataset, stream: io.TextIOBase) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["id", "assigned_label", "true_label"]
                    + [f"f{j}" for j in range(ds.feature_dim)])
    for s in ds.samples:
        true = -1 if s.true_label is None else s.true_label
        writer.writerow([s.id, s.assigned_label, true]
                        + [repr(float(v)) for v in s.features])


def write_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_csv_stream(ds, fh)


def read_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    """Parse a dataset CSV; see the module docstring for the schema.

    num_classes overrides the inferred class count (1 + max observed label),
    which matters when some class has no samples in the file.
    """
    path = Path(path)
    samples: list[Sample] = []
    first_line: dict[int, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header[:3] != ["id", "assigned_label", "true_label"] or len(header) < 4:
            raise ParseError(f"{path}: line 1: bad header {header!r}")
        d = len(header) - 3
        for j, name in enumerate(header[3:]):
            if name != f"f{j}":
                raise ParseError(f"{path}: line 1: feature column {j} named {name!r}, expected 'f{j}'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3 + d:
                raise ParseError(f"{path}: line {lineno}: {len(row)} fields, expected {3 + d}")
            try:
                sid = int(row[0])
                assigned = int(row[1])
                true_raw = int(row[2])
                feats = np.array([float(v) for v in row[3:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if sid in first_line:
                raise ParseError(
                    f"{path}: line {lineno}: duplicate id {sid} (first seen on line {first_line[sid]})")
            first_line[sid] = lineno
            if true_raw < -1:
                raise ParseError(f"{path}: line {lineno}: true_label {true_raw} invalid")
            samples.append(Sample(id=sid, features=feats, assigned_label=assigned,
                                  true_label=None if true_raw == -1 else true_raw))
    if num_classes is None:
        top = max(max(s.assigned_label for s in samples),
                  max((s.true_label for s in samples if s.true_label is not None), default=0))
        num_classes = top + 1
    return Dataset(samples=samples, num_classes=num_classes, feature_dim=d,
                   provenance=f"read_csv({path})")
