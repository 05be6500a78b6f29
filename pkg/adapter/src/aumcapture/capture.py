"""Capture per-epoch, per-sample logits from an external training loop.

The output is the logit-log text format: one header line of space-separated
``key=value`` pairs (``version``, ``num_classes``, ``epochs_logged``,
``seed``, ``dataset_digest``, in that order), then one record per line as
``epoch,sample_id,assigned_label,logit0,...`` with 1-indexed epochs and
floats as shortest round-trip decimals, LF endings throughout. Any finished
session parses under ``aumclean aum`` with no errors.

All analysis lives on the reading side; this package only writes files.
reference_aums() exists purely so a capture pipeline can cross-check one of
its own files against the reader before trusting a long run.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

__all__ = ["CaptureError", "CaptureSession", "begin", "record", "finish",
           "reference_aums"]

_ALLOWED_METADATA = frozenset({"seed", "dataset_digest"})


class CaptureError(Exception):
    """Misuse of the capture API or an inconsistent session."""


class CaptureSession:
    """One logit-log file in the making.

    Records buffer in memory: the header carries the epoch count, which is
    unknown until finish(), so nothing touches the filesystem before then.
    header_written flips when finish() emits the header (always before any
    record line) and doubles as the finished marker. Callers serialize
    record() per session; one session per output file.
    """

    def __init__(self, num_classes: int, path: Path, seed: int,
                 dataset_digest: str):
        self.num_classes = num_classes
        self.path = path
        self.seed = seed
        self.dataset_digest = dataset_digest
        self.header_written = False
        self.seen: set[tuple[int, int]] = set()
        self._records: list[tuple[int, int, int, tuple[float, ...]]] = []


def begin(num_classes: int, path: str | Path, metadata: dict | None = None
          ) -> CaptureSession:
    """Open a capture session writing to `path` when finished.

    `metadata` may carry `seed` (int, default 0) and `dataset_digest`
    (string without whitespace, default "-" for unknown); both land in the
    file header verbatim. Unknown keys are rejected rather than dropped.
    """
    if not isinstance(num_classes, int) or num_classes < 2:
        raise CaptureError(f"need an int num_classes >= 2, got {num_classes!r}")
    meta = dict(metadata or {})
    unknown = set(meta) - _ALLOWED_METADATA
    if unknown:
        raise CaptureError(f"unknown metadata keys {sorted(unknown)}, "
                           f"allowed: {sorted(_ALLOWED_METADATA)}")
    seed = meta.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise CaptureError(f"metadata seed must be an int, got {seed!r}")
    digest = meta.get("dataset_digest", "-")
    if not isinstance(digest, str) or digest == "" or any(c.isspace() for c in digest):
        raise CaptureError(
            f"dataset_digest must be a non-empty string without whitespace, got {digest!r}")
    return CaptureSession(num_classes, Path(path), seed, digest)


def record(session: CaptureSession, epoch: int, sample_id: int,
           assigned_label: int, logits: Sequence[float]) -> None:
    """Buffer one record; raises on duplicates and shape mistakes."""
    if session.header_written:
        raise CaptureError("session already finished")
    if not isinstance(epoch, int) or epoch < 1:
        raise CaptureError(f"epochs are 1-indexed ints, got {epoch!r}")
    if not isinstance(sample_id, int):
        raise CaptureError(f"sample_id must be an int, got {sample_id!r}")
    if not isinstance(assigned_label, int) or not 0 <= assigned_label < session.num_classes:
        raise CaptureError(
            f"assigned_label {assigned_label!r} outside 0..{session.num_classes - 1}")
    try:
        values = tuple(float(v) for v in logits)
    except (TypeError, ValueError) as exc:
        raise CaptureError(f"logits must be numbers: {exc}") from None
    if len(values) != session.num_classes:
        raise CaptureError(
            f"got {len(values)} logits, session has {session.num_classes} classes")
    key = (epoch, sample_id)
    if key in session.seen:
        raise CaptureError(f"duplicate record for epoch {epoch}, sample {sample_id}")
    session.seen.add(key)
    session._records.append((epoch, sample_id, assigned_label, values))


def finish(session: CaptureSession) -> dict:
    """Validate completeness, write the file, return {epochs, samples, records}.

    A file the reader would reject is never written: every sample id must
    appear in every epoch 1..max before anything hits disk.
    """
    if session.header_written:
        raise CaptureError("session already finished")
    if not session._records:
        raise CaptureError("no records captured")

    epochs_present = sorted({e for e, _, _, _ in session._records})
    last = epochs_present[-1]
    missing = sorted(set(range(1, last + 1)) - set(epochs_present))
    if missing:
        raise CaptureError(f"missing epochs {missing} (records span 1..{last})")
    universe = {sid for _, sid, _, _ in session._records}
    by_epoch: dict[int, set[int]] = {e: set() for e in epochs_present}
    for e, sid, _, _ in session._records:
        by_epoch[e].add(sid)
    for e in epochs_present:
        gap = universe - by_epoch[e]
        if gap:
            raise CaptureError(f"epoch {e}: missing record for sample {min(gap)}")

    header = (f"version=1 num_classes={session.num_classes} "
              f"epochs_logged={last} seed={session.seed} "
              f"dataset_digest={session.dataset_digest}")
    with open(session.path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        session.header_written = True
        for epoch, sid, assigned, values in sorted(session._records):
            fh.write(f"{epoch},{sid},{assigned},"
                     + ",".join(repr(v) for v in values) + "\n")
    return {"epochs": last, "samples": len(universe),
            "records": len(session._records)}


def reference_aums(path: str | Path) -> dict[int, float]:
    """Per-sample mean margin, recomputed from a written file.

    Self-check only. Margin is the assigned-class logit minus the largest
    other logit; the mean runs over every epoch in the file.
    """
    sums: dict[int, list[float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.startswith("version=1 "):
            raise CaptureError(f"{path}: not a version-1 logit log")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            try:
                sid, assigned = int(parts[1]), int(parts[2])
                values = [float(v) for v in parts[3:]]
            except (IndexError, ValueError) as exc:
                raise CaptureError(f"{path}: line {lineno}: {exc}") from None
            best_other = max(v for i, v in enumerate(values) if i != assigned)
            sums.setdefault(sid, []).append(values[assigned] - best_other)
    return {sid: math.fsum(ms) / len(ms) for sid, ms in sums.items()}
