"""Identification pipeline: two threshold rounds, AUM tables, flags, reports.

The procedure, end to end: draw a two-round threshold plan; for each round,
relabel that round's threshold set to the fake class and train a fresh
model to the first LR drop while logging logits; turn each log into an AUM
table; take the qth percentile of each round's threshold-sample AUMs as
that round's cutoff alpha; flag a sample iff its AUM in its judging round
is <= that round's alpha. Samples in s1 are judged by round 2 (they trained
normally there); everything else is judged by round 1. Every sample gets
exactly one verdict and no sample is judged in a round where it was a
threshold sample.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .core import percentile_nearest_rank, running_average, spearman
from .data import Dataset
from .errors import InvalidArgumentError
from .logitlog import LogitLog
from .threshold import ThresholdPlan, build_round_dataset, plan_rounds, write_plan
from .trainer import TrainConfig, evaluate, init_model, train

__all__ = [
    "AumEntry",
    "AumTable",
    "IdentificationReport",
    "IdentificationArtifacts",
    "compute_aum_table",
    "compute_alpha",
    "flag_mislabeled",
    "score_identification",
    "clean_dataset",
    "adjusted_batch_size",
    "identification_artifacts",
    "run_identification",
    "removal_sweep",
    "consistency_check",
    "emit_report",
]

HIST_BINS = 50


@dataclass(frozen=True)
class AumEntry:
    aum: float
    is_threshold: bool
    assigned_label: int


@dataclass
class AumTable:
    entries: dict[int, AumEntry]
    epochs_used: int

    def ids(self) -> list[int]:
        return sorted(self.entries)

    def threshold_aums(self) -> list[float]:
        return [e.aum for _, e in sorted(self.entries.items()) if e.is_threshold]

    def aum_of(self, sample_id: int) -> float:
        return self.entries[sample_id].aum


@dataclass
class IdentificationReport:
    alpha_round1: float
    alpha_round2: float
    percentile_q: float
    flagged_ids: frozenset[int]
    per_round_assignment: dict[int, int]
    metrics: dict[str, float] | None = None


@dataclass
class IdentificationArtifacts:
    """Everything one identification run produces, kept in memory."""

    plan: ThresholdPlan
    log1: LogitLog
    log2: LogitLog
    table1: AumTable
    table2: AumTable
    report: IdentificationReport

    def judged_aum(self, sample_id: int) -> float:
        table = self.table2 if self.report.per_round_assignment[sample_id] == 2 else self.table1
        return table.aum_of(sample_id)


def compute_aum_table(log: LogitLog, plan_subset: frozenset[int] | set[int]) -> AumTable:
    """Per-sample mean margin over the logged epochs.

    Margins use each record's own assigned label, so threshold samples are
    scored against the fake class they trained under. Validates log
    completeness first (raises CorruptLogError on gaps).
    """
    log.validate()
    epochs, ids, assigned, logits = log.arrays()
    margins = kernels.margins_from_logits(logits, assigned)
    uniq, first_idx, inverse, counts = np.unique(
        ids, return_index=True, return_inverse=True, return_counts=True)
    sums = np.zeros(uniq.shape[0])
    np.add.at(sums, inverse, margins)
    aums = sums / counts
    entries = {
        int(uniq[i]): AumEntry(aum=float(aums[i]),
                               is_threshold=int(uniq[i]) in plan_subset,
                               assigned_label=int(assigned[first_idx[i]]))
        for i in range(uniq.shape[0])
    }
    return AumTable(entries=entries, epochs_used=log.epochs_logged)


def compute_alpha(table: AumTable, q: float) -> float:
    """qth nearest-rank percentile of the threshold-sample AUMs."""
    thr = table.threshold_aums()
    if not thr:
        raise InvalidArgumentError("table has no threshold samples; alpha is undefined")
    return percentile_nearest_rank(thr, q)


def flag_mislabeled(t1: AumTable, t2: AumTable, plan: ThresholdPlan,
                    q: float = 99.0) -> IdentificationReport:
    """Combine the two rounds into one verdict per sample (AUM <= alpha flags).

    t1 must come from the round trained with s1 as the fake class, t2 from
    the s2 round. Samples in s1 are judged by round 2; all others by round
    1; boundary hits (AUM exactly alpha) are flagged.
    """
    all_ids = set(t1.entries)
    if all_ids != set(t2.entries):
        raise InvalidArgumentError("round tables cover different sample ids")
    missing = (plan.s1 | plan.s2) - all_ids
    if missing:
        raise InvalidArgumentError(f"plan ids missing from tables: {sorted(missing)[:5]}")
    alpha1 = compute_alpha(t1, q)
    alpha2 = compute_alpha(t2, q)
    flagged = set()
    assignment: dict[int, int] = {}
    for sid in all_ids:
        if sid in plan.s1:
            assignment[sid] = 2
            if t2.entries[sid].aum <= alpha2:
                flagged.add(sid)
        else:
            assignment[sid] = 1
            if t1.entries[sid].aum <= alpha1:
                flagged.add(sid)
    return IdentificationReport(alpha_round1=alpha1, alpha_round2=alpha2,
                                percentile_q=q, flagged_ids=frozenset(flagged),
                                per_round_assignment=assignment)


def score_identification(report: IdentificationReport, ds: Dataset) -> dict[str, float]:
    """Precision and recall of the flag set against ground truth.

    Empty flag set scores precision 1.0; no mislabeled samples scores
    recall 1.0 (nothing to find).
    """
    if not ds.has_true_labels():
        raise InvalidArgumentError("scoring needs true_label on every sample")
    positives = {s.id for s in ds.samples if s.assigned_label != s.true_label}
    flagged = set(report.flagged_ids)
    hit = len(flagged & positives)
    precision = hit / len(flagged) if flagged else 1.0
    recall = hit / len(positives) if positives else 1.0
    return {"precision": precision, "recall": recall}


def clean_dataset(ds: Dataset, report: IdentificationReport) -> Dataset:
    """Drop flagged samples; labels of the survivors pass through untouched."""
    unknown = set(report.flagged_ids) - {s.id for s in ds.samples}
    if unknown:
        raise InvalidArgumentError(f"flagged ids not in dataset: {sorted(unknown)[:5]}")
    kept = [s for s in ds.samples if s.id not in report.flagged_ids]
    if not kept:
        raise InvalidArgumentError("cleaning removed every sample")
    prov = (f"clean(removed={len(report.flagged_ids)}, q={report.percentile_q}, "
            f"alpha1={report.alpha_round1!r}, alpha2={report.alpha_round2!r}) <- {ds.provenance}")
    return Dataset(samples=kept, num_classes=ds.num_classes,
                   feature_dim=ds.feature_dim, provenance=prov)


def adjusted_batch_size(original: int, removed_fraction: float) -> int:
    """Shrink the batch so a smaller dataset keeps its iteration count.

    max(1, round(original * (1 - removed_fraction))).
    """
    if original < 1:
        raise InvalidArgumentError(f"batch size must be >= 1, got {original}")
    if not (0.0 <= removed_fraction < 1.0):
        raise InvalidArgumentError(f"removed_fraction must be in [0, 1), got {removed_fraction}")
    return max(1, round(original * (1.0 - removed_fraction)))


def identification_artifacts(ds: Dataset, id_cfg: TrainConfig, q: float,
                             seed: int) -> IdentificationArtifacts:
    """Run both rounds in memory and return every intermediate product.

    The plan is drawn with `seed`; round r trains under seed + r (id_cfg's
    own seed field is overridden). id_cfg must have stop_at_first_drop set:
    identification deliberately never trains past the first drop.
    """
    if not id_cfg.stop_at_first_drop:
        raise InvalidArgumentError("identification config must set stop_at_first_drop")
    plan = plan_rounds(ds, seed)
    digest = ds.digest()
    logs: list[LogitLog] = []
    for round_no in (1, 2):
        round_ds = build_round_dataset(ds, plan.round_ids(round_no))
        cfg = replace(id_cfg, seed=seed + round_no)
        model = init_model(ds.feature_dim, round_ds.num_classes, cfg)
        log = LogitLog(num_classes=round_ds.num_classes, seed=cfg.seed,
                       dataset_digest=digest)
        train(model, round_ds, cfg, log)
        logs.append(log)
    t1 = compute_aum_table(logs[0], plan.s1)
    t2 = compute_aum_table(logs[1], plan.s2)
    report = flag_mislabeled(t1, t2, plan, q)
    if ds.has_true_labels():
        metrics = score_identification(report, ds)
        metrics["num_flagged"] = float(len(report.flagged_ids))
        report.metrics = metrics
    return IdentificationArtifacts(plan=plan, log1=logs[0], log2=logs[1],
                                   table1=t1, table2=t2, report=report)


def run_identification(ds: Dataset, id_cfg: TrainConfig, q: float, seed: int,
                       out_dir: str | Path | None = None,
                       trajectory_ids: Sequence[int] = ()) -> IdentificationReport:
    """Full identification; when out_dir is given, persist all artifacts.

    Writes plan.txt, round{1,2}.logits, aum_round{1,2}.csv, flags.csv,
    hist.csv, report.txt, and trajectories/<id>.csv. Persistence happens
    only after all computation succeeded; a failure while writing removes
    the directory so no partial artifact survives.
    """
    art = identification_artifacts(ds, id_cfg, q, seed)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        try:
            write_plan(art.plan, out_dir / "plan.txt")
            art.log1.write(out_dir / "round1.logits")
            art.log2.write(out_dir / "round2.logits")
            emit_report(art, ds, out_dir, trajectory_ids=trajectory_ids)
        except BaseException:
            shutil.rmtree(out_dir, ignore_errors=True)
            raise
    return art.report


def removal_sweep(train_ds: Dataset, holdout: Dataset, fractions: Sequence[float],
                  mode: str, train_cfg: TrainConfig, seed: int,
                  aum_table: AumTable | None = None) -> list[tuple[float, float]]:
    """Retrain after removing each fraction of train_ds; report holdout error.

    mode "aum-ranked" removes lowest-AUM-first using the supplied table
    (computed once, outside); mode "random" removes uniformly at random,
    independently per fraction. Batch size shrinks with the removed
    fraction so every point runs the same number of iterations.
    """
    if mode not in ("aum-ranked", "random"):
        raise InvalidArgumentError(f"unknown sweep mode {mode!r}")
    if len(set(fractions)) != len(fractions):
        raise InvalidArgumentError(f"fractions must be distinct, got {list(fractions)}")
    for f in fractions:
        if not (0.0 <= f < 1.0):
            raise InvalidArgumentError(f"fractions must lie in [0, 1), got {f}")
    if mode == "aum-ranked":
        if aum_table is None:
            raise InvalidArgumentError("aum-ranked sweep needs a precomputed AUM table")
        missing = {s.id for s in train_ds.samples} - set(aum_table.entries)
        if missing:
            raise InvalidArgumentError(f"AUM table lacks train ids: {sorted(missing)[:5]}")
        ids = np.array(sorted(train_ds.ids().tolist()), dtype=np.int64)
        aums = np.array([aum_table.aum_of(int(i)) for i in ids])
        ranked = ids[np.lexsort((ids, aums))]  # ascending AUM, ties by id
    results: list[tuple[float, float]] = []
    n = len(train_ds)
    for i, f in enumerate(fractions):
        k = round(f * n)
        if mode == "aum-ranked":
            removed = set(int(x) for x in ranked[:k])
        else:
            rng = np.random.default_rng([seed, i])
            all_ids = np.sort(train_ds.ids())
            removed = set(int(x) for x in rng.choice(all_ids, size=k, replace=False))
        kept = [s for s in train_ds.samples if s.id not in removed]
        reduced = Dataset(samples=kept, num_classes=train_ds.num_classes,
                          feature_dim=train_ds.feature_dim,
                          provenance=f"sweep({mode}, f={f}) <- {train_ds.provenance}")
        cfg = replace(train_cfg, batch_size=adjusted_batch_size(train_cfg.batch_size, f))
        model = init_model(reduced.feature_dim, reduced.num_classes, cfg)
        train(model, reduced, cfg)
        results.append((f, evaluate(model, holdout)))
    return results


def consistency_check(ds: Dataset, cfgs: Sequence[TrainConfig]) -> np.ndarray:
    """Pairwise Spearman of per-sample AUM rankings across training configs.

    All configs train on the same round-1 threshold dataset (plan drawn
    from cfgs[0].seed); the correlation runs over the common non-threshold
    ids. Configs may differ only in seed and hidden_width.
    """
    if len(cfgs) < 2:
        raise InvalidArgumentError("consistency check needs at least 2 configs")
    free = {"seed", "hidden_width"}
    for f in fields(TrainConfig):
        if f.name in free:
            continue
        values = {getattr(cfg, f.name) for cfg in cfgs}
        if len(values) > 1:
            raise InvalidArgumentError(
                f"configs may differ only in seed/hidden_width; {f.name} varies: {sorted(values, key=repr)}")
    plan = plan_rounds(ds, cfgs[0].seed)
    round_ds = build_round_dataset(ds, plan.s1)
    judged_ids = [s.id for s in ds.samples if s.id not in plan.s1]
    judged_ids.sort()
    vectors = []
    for cfg in cfgs:
        model = init_model(ds.feature_dim, round_ds.num_classes, cfg)
        log = LogitLog(num_classes=round_ds.num_classes, seed=cfg.seed,
                       dataset_digest="-")
        train(model, round_ds, cfg, log)
        table = compute_aum_table(log, plan.s1)
        vectors.append(np.array([table.aum_of(i) for i in judged_ids]))
    k = len(cfgs)
    matrix = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            rho = spearman(vectors[a], vectors[b])
            matrix[a, b] = matrix[b, a] = rho
    return matrix


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def _margin_trace(log: LogitLog, sample_id: int) -> np.ndarray:
    epochs, ids, assigned, logits = log.arrays()
    mask = ids == sample_id
    if not mask.any():
        raise InvalidArgumentError(f"sample {sample_id} not present in log")
    order = np.argsort(epochs[mask], kind="stable")
    sub_logits = np.ascontiguousarray(logits[mask][order])
    sub_assigned = np.ascontiguousarray(assigned[mask][order])
    return kernels.margins_from_logits(sub_logits, sub_assigned)


def _write_aum_csv(table: AumTable, ds: Dataset, path: Path) -> None:
    truth = {s.id: (-1 if s.true_label is None else s.true_label) for s in ds.samples}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id,aum,is_threshold,assigned,true\n")
        for sid in table.ids():
            e = table.entries[sid]
            fh.write(f"{sid},{e.aum!r},{int(e.is_threshold)},{e.assigned_label},{truth.get(sid, -1)}\n")


def _write_flags_csv(art: IdentificationArtifacts, path: Path) -> None:
    rep = art.report
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id,judged_by_round,aum,alpha,flagged\n")
        for sid in sorted(rep.per_round_assignment):
            rnd = rep.per_round_assignment[sid]
            alpha = rep.alpha_round2 if rnd == 2 else rep.alpha_round1
            aum_val = art.judged_aum(sid)
            fh.write(f"{sid},{rnd},{aum_val!r},{alpha!r},{int(sid in rep.flagged_ids)}\n")


def _write_hist_csv(art: IdentificationArtifacts, ds: Dataset, path: Path) -> None:
    truth = {s.id: s.true_label for s in ds.samples}
    assigned = {s.id: s.assigned_label for s in ds.samples}
    clean, mislabeled = [], []
    for sid in art.report.per_round_assignment:
        t = truth.get(sid)
        if t is None:
            continue
        (clean if assigned[sid] == t else mislabeled).append(art.judged_aum(sid))
    thresh = ([art.table1.entries[i].aum for i in sorted(art.plan.s1)]
              + [art.table2.entries[i].aum for i in sorted(art.plan.s2)])
    pooled = clean + mislabeled + thresh
    lo, hi = min(pooled), max(pooled)
    if lo == hi:
        hi = lo + 1.0  # degenerate range; keep bins well-formed
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    counts = {name: np.histogram(vals, bins=edges)[0] if vals else np.zeros(HIST_BINS, dtype=np.int64)
              for name, vals in (("clean", clean), ("mislabeled", mislabeled), ("threshold", thresh))}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_left,bin_right,clean,mislabeled,threshold\n")
        for b in range(HIST_BINS):
            fh.write(f"{float(edges[b])!r},{float(edges[b + 1])!r},"
                     f"{counts['clean'][b]},{counts['mislabeled'][b]},{counts['threshold'][b]}\n")


def _write_summary(art: IdentificationArtifacts, ds: Dataset, path: Path) -> None:
    rep = art.report
    lines = [
        "identification summary",
        f"samples={len(rep.per_round_assignment)}",
        f"threshold_per_round={len(art.plan.s1)}",
        f"percentile_q={rep.percentile_q!r}",
        f"alpha_round1={rep.alpha_round1!r}",
        f"alpha_round2={rep.alpha_round2!r}",
        f"epochs_used={art.table1.epochs_used}",
        f"flagged={len(rep.flagged_ids)}",
    ]
    if rep.metrics is not None:
        for key in sorted(rep.metrics):
            lines.append(f"{key}={rep.metrics[key]!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_report(art: IdentificationArtifacts, ds: Dataset, out_dir: str | Path,
                trajectory_ids: Sequence[int] = ()) -> list[Path]:
    """Write the analysis files for one identification run.

    aum_round{1,2}.csv carry per-sample AUMs; flags.csv the verdicts;
    hist.csv a 50-bin AUM histogram split into clean/mislabeled/threshold
    groups (truth-dependent groups stay empty without ground truth);
    report.txt the human-readable summary; trajectories/<id>.csv per-epoch
    margin and running-average curves from each sample's judging round.
    Output is deterministic: rerunning on equal artifacts reproduces every
    byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _mark(p: Path) -> Path:
        written.append(p)
        return p

    _write_aum_csv(art.table1, ds, _mark(out_dir / "aum_round1.csv"))
    _write_aum_csv(art.table2, ds, _mark(out_dir / "aum_round2.csv"))
    _write_flags_csv(art, _mark(out_dir / "flags.csv"))
    _write_hist_csv(art, ds, _mark(out_dir / "hist.csv"))
    _write_summary(art, ds, _mark(out_dir / "report.txt"))
    if trajectory_ids:
        traj_dir = out_dir / "trajectories"
        traj_dir.mkdir(exist_ok=True)
        for sid in trajectory_ids:
            rnd = art.report.per_round_assignment.get(int(sid))
            if rnd is None:
                raise InvalidArgumentError(f"trajectory requested for unknown sample {sid}")
            log = art.log2 if rnd == 2 else art.log1
            margins = _margin_trace(log, int(sid))
            avg = running_average(margins)
            with open(_mark(traj_dir / f"{int(sid)}.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write("epoch,margin,running_average\n")
                for t in range(margins.shape[0]):
                    fh.write(f"{t + 1},{float(margins[t])!r},{float(avg[t])!r}\n")
    return written
