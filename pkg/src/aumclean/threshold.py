"""Threshold-sample plans: the deliberately mislabeled fake class.

A plan names two disjoint id sets s1 and s2 of equal size floor(N/(c+1)).
Each identification round relabels one set to the extra class index c and
trains on c+1 classes; samples relabeled this way are mislabeled by
construction, and their AUM distribution calibrates the flagging cutoff.
Two rounds exist so that every sample is an ordinary (non-threshold) sample
in at least one round and can be judged there.

Plan file format (UTF-8, LF): four ``key=value`` lines, ids sorted and
comma-joined:

    seed=7
    num_classes=10
    s1=12,40,977
    s2=8,333,4119
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import InvalidArgumentError, ParseError

__all__ = [
    "ThresholdPlan",
    "threshold_count",
    "plan_rounds",
    "build_round_dataset",
    "write_plan",
    "read_plan",
]


@dataclass(frozen=True)
class ThresholdPlan:
    s1: frozenset[int]
    s2: frozenset[int]
    num_classes: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.s1) != len(self.s2):
            raise InvalidArgumentError(
                f"rounds must be equally sized, got {len(self.s1)} and {len(self.s2)}")
        if not self.s1:
            raise InvalidArgumentError("threshold sets must be non-empty")
        if self.s1 & self.s2:
            raise InvalidArgumentError(
                f"threshold sets overlap on {sorted(self.s1 & self.s2)[:5]}")

    def round_ids(self, round_no: int) -> frozenset[int]:
        if round_no == 1:
            return self.s1
        if round_no == 2:
            return self.s2
        raise InvalidArgumentError(f"round must be 1 or 2, got {round_no}")


def threshold_count(n: int, c: int) -> int:
    """floor(n / (c+1)): how many samples each round relabels.

    Requires n >= 2(c+1) so that two disjoint threshold sets of this size
    can be drawn and every round still contains at least one ordinary
    sample per real class.
    """
    if c < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {c}")
    if n < 2 * (c + 1):
        raise InvalidArgumentError(
            f"n={n} too small: both rounds need disjoint threshold sets, so n >= 2(c+1) = {2 * (c + 1)}")
    return n // (c + 1)


def plan_rounds(ds: Dataset, seed: int) -> ThresholdPlan:
    """Draw s1, then s2 from its complement, uniformly without replacement.

    Keys on the sorted id list before the seeded shuffle, so the plan is
    invariant to the ordering of samples in the dataset.
    """
    k = threshold_count(len(ds), ds.num_classes)
    ids = np.sort(ds.ids())
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    s1 = frozenset(int(ids[i]) for i in perm[:k])
    s2 = frozenset(int(ids[i]) for i in perm[k:2 * k])
    return ThresholdPlan(s1=s1, s2=s2, num_classes=ds.num_classes, seed=seed)


def build_round_dataset(ds: Dataset, threshold_ids: frozenset[int] | set[int]) -> Dataset:
    """Relabel the given ids to the fake class c and widen to c+1 classes.

    Features, ids, and true_label pass through untouched; the returned
    dataset is what one identification round trains on.
    """
    unknown = set(threshold_ids) - {s.id for s in ds.samples}
    if unknown:
        raise InvalidArgumentError(f"threshold ids not in dataset: {sorted(unknown)[:5]}")
    fake = ds.num_classes
    samples = [replace(s, assigned_label=fake) if s.id in threshold_ids else s
               for s in ds.samples]
    return Dataset(samples=samples, num_classes=fake + 1, feature_dim=ds.feature_dim,
                   provenance=f"threshold_round({len(threshold_ids)} ids -> class {fake}) <- {ds.provenance}")


def write_plan(plan: ThresholdPlan, path: str | Path) -> None:
    lines = [
        f"seed={plan.seed}",
        f"num_classes={plan.num_classes}",
        "s1=" + ",".join(str(i) for i in sorted(plan.s1)),
        "s2=" + ",".join(str(i) for i in sorted(plan.s2)),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_plan(path: str | Path) -> ThresholdPlan:
    path = Path(path)
    fields: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        if key in fields:
            raise ParseError(f"{path}: line {lineno}: duplicate key {key!r}")
        fields[key] = value
    missing = {"seed", "num_classes", "s1", "s2"} - fields.keys()
    if missing:
        raise ParseError(f"{path}: missing keys {sorted(missing)}")
    try:
        ids = {name: frozenset(int(t) for t in fields[name].split(",") if t != "")
               for name in ("s1", "s2")}
        return ThresholdPlan(s1=ids["s1"], s2=ids["s2"],
                             num_classes=int(fields["num_classes"]),
                             seed=int(fields["seed"]))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
