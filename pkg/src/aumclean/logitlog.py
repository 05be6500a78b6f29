"""The logit-log file format: per-epoch, per-sample pre-softmax scores.

This is the contract shared with external capture tools. A conformant file
is UTF-8 with LF endings:

* line 1, the header: space-separated ``key=value`` pairs, exactly the keys
  ``version`` (currently 1), ``num_classes``, ``epochs_logged``, ``seed``,
  ``dataset_digest`` (hex string, or "-" when unknown), in that order;
* every other line, one record: ``epoch,sample_id,assigned_label,logit0,...``
  with epochs 1-indexed and floats as shortest round-trip decimals.

Completeness invariant: records cover exactly one (epoch, sample_id) pair
for every epoch in 1..epochs_logged and every sample id appearing anywhere
in the file. Violations raise CorruptLogError naming the first gap found.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import CorruptLogError, InvalidArgumentError, ParseError

__all__ = ["LogitLog"]

_HEADER_KEYS = ("version", "num_classes", "epochs_logged", "seed", "dataset_digest")


class LogitLog:
    """In-memory logit log; trainer sink on one side, file format on the other.

    Records accumulate via append_epoch (bulk, the trainer path) or
    append_record (single, for hand-built logs); write() and read() move
    them through the text format above. Storage is columnar: flat arrays
    of epochs, ids, assigned labels, and an (R, c) logit matrix.
    """

    def __init__(self, num_classes: int, seed: int, dataset_digest: str = "-",
                 version: int = 1):
        if num_classes < 2:
            raise InvalidArgumentError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = int(num_classes)
        self.seed = int(seed)
        self.dataset_digest = dataset_digest
        self.version = int(version)
        self._epochs: list[np.ndarray] = []
        self._ids: list[np.ndarray] = []
        self._assigned: list[np.ndarray] = []
        self._logits: list[np.ndarray] = []

    # -- accumulation ------------------------------------------------------

    def append_epoch(self, epoch: int, ids: np.ndarray, assigned: np.ndarray,
                     logits: np.ndarray) -> None:
        n = len(ids)
        if logits.shape != (n, self.num_classes) or len(assigned) != n:
            raise InvalidArgumentError(
                f"epoch {epoch}: shapes {logits.shape}/{len(assigned)} do not match {n} ids x {self.num_classes} classes")
        if epoch < 1:
            raise InvalidArgumentError(f"epochs are 1-indexed, got {epoch}")
        self._epochs.append(np.full(n, epoch, dtype=np.int64))
        self._ids.append(np.asarray(ids, dtype=np.int64).copy())
        self._assigned.append(np.asarray(assigned, dtype=np.int64).copy())
        self._logits.append(np.asarray(logits, dtype=np.float64).copy())

    def append_record(self, epoch: int, sample_id: int, assigned: int,
                      logits) -> None:
        self.append_epoch(epoch, np.array([sample_id]), np.array([assigned]),
                          np.asarray(logits, dtype=np.float64).reshape(1, -1))

    # -- access ------------------------------------------------------------

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(epochs, ids, assigned, logits) as flat arrays in record order."""
        if not self._epochs:
            return (np.empty(0, np.int64), np.empty(0, np.int64),
                    np.empty(0, np.int64), np.empty((0, self.num_classes)))
        return (np.concatenate(self._epochs), np.concatenate(self._ids),
                np.concatenate(self._assigned), np.concatenate(self._logits))

    def records(self) -> Iterator[tuple[int, int, int, np.ndarray]]:
        epochs, ids, assigned, logits = self.arrays()
        for i in range(len(epochs)):
            yield int(epochs[i]), int(ids[i]), int(assigned[i]), logits[i]

    @property
    def epochs_logged(self) -> int:
        if not self._epochs:
            return 0
        return int(max(int(block.max()) for block in self._epochs))

    def sample_ids(self) -> np.ndarray:
        _, ids, _, _ = self.arrays()
        return np.unique(ids)

    def validate(self) -> None:
        """Check the completeness invariant; raise CorruptLogError on a gap."""
        epochs, ids, _, logits = self.arrays()
        if len(epochs) == 0:
            raise CorruptLogError("log contains no records")
        t_max = int(epochs.max())
        present = set(np.unique(epochs).tolist())
        missing_epochs = sorted(set(range(1, t_max + 1)) - present)
        if missing_epochs:
            raise CorruptLogError(f"missing epochs {missing_epochs} (log claims 1..{t_max})")
        universe = np.unique(ids)
        for t in range(1, t_max + 1):
            ids_t = ids[epochs == t]
            uniq, counts = np.unique(ids_t, return_counts=True)
            dup = uniq[counts > 1]
            if dup.size:
                raise CorruptLogError(f"epoch {t}: duplicate record for sample {int(dup[0])}")
            gap = np.setdiff1d(universe, uniq, assume_unique=True)
            if gap.size:
                raise CorruptLogError(f"epoch {t}: missing record for sample {int(gap[0])}")

    # -- file format ------------------------------------------------------

    def header_line(self) -> str:
        return (f"version={self.version} num_classes={self.num_classes} "
                f"epochs_logged={self.epochs_logged} seed={self.seed} "
                f"dataset_digest={self.dataset_digest}")

    def write(self, path: str | Path) -> None:
        self.validate()
        epochs, ids, assigned, logits = self.arrays()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.header_line() + "\n")
            for i in range(len(epochs)):
                row = logits[i]
                fh.write(f"{epochs[i]},{ids[i]},{assigned[i]},"
                         + ",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "LogitLog":
        path = Path(path)
        with open(path, "r", encoding="utf-8", newline="") as fh:
            header = fh.readline().rstrip("\n")
            fields = _parse_header(path, header)
            log = cls(num_classes=fields["num_classes"], seed=fields["seed"],
                      dataset_digest=fields["dataset_digest"], version=fields["version"])
            epochs, ids, assigned, rows = [], [], [], []
            width = 3 + log.num_classes
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(",")
                if len(parts) != width:
                    raise ParseError(
                        f"{path}: line {lineno}: {len(parts)} fields, expected {width}")
                try:
                    epochs.append(int(parts[0]))
                    ids.append(int(parts[1]))
                    assigned.append(int(parts[2]))
                    rows.append([float(v) for v in parts[3:]])
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if rows:
            log._epochs = [np.array(epochs, dtype=np.int64)]
            log._ids = [np.array(ids, dtype=np.int64)]
            log._assigned = [np.array(assigned, dtype=np.int64)]
            log._logits = [np.array(rows, dtype=np.float64)]
        log.validate()
        if log.epochs_logged != fields["epochs_logged"]:
            raise CorruptLogError(
                f"{path}: header claims {fields['epochs_logged']} epochs, records span {log.epochs_logged}")
        return log


def _parse_header(path: Path, line: str) -> dict:
    pairs = line.split(" ")
    keys = tuple(p.partition("=")[0] for p in pairs)
    if keys != _HEADER_KEYS:
        raise ParseError(f"{path}: line 1: header keys {keys} != {_HEADER_KEYS}")
    raw = dict(p.partition("=")[::2] for p in pairs)
    try:
        out = {k: int(raw[k]) for k in ("version", "num_classes", "epochs_logged", "seed")}
    except ValueError as exc:
        raise ParseError(f"{path}: line 1: {exc}") from None
    out["dataset_digest"] = raw["dataset_digest"]
    if out["version"] != 1:
        raise ParseError(f"{path}: unsupported version {out['version']}")
    return out
