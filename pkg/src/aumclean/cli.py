"""Command-line front end: reproducible experiment steps over CSV artifacts.

Every subcommand takes an explicit seed (no wall-clock defaults), writes
byte-stable outputs, and drops a RunManifest JSON next to them recording
argv, seeds, config digests, and sha256 checksums of inputs and outputs.
The manifest's timestamp is the single intentionally non-reproducible
field; every data artifact reruns byte-identically.

Numeric defaults follow the source experiment's proportions at desk scale:
full training runs 100 epochs with LR drops at epochs 50 and 75 (factor
10), batch 256; identification runs stop at the first drop and use a
quarter of the batch size (64); the flagging percentile q defaults to 99.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import generate_synthetic, read_csv, split_holdout, write_csv, NoiseSpec
from .errors import AumCleanError, InvalidArgumentError, ParseError
from .logitlog import LogitLog
from .pipeline import (AumTable, IdentificationReport, adjusted_batch_size,
                       clean_dataset, compute_alpha, compute_aum_table,
                       consistency_check, identification_artifacts, removal_sweep,
                       run_identification, score_identification)
from .threshold import read_plan
from .trainer import TrainConfig, evaluate, init_model, train

DEFAULT_EPOCHS = 100
DEFAULT_BATCH = 256
DEFAULT_ID_EPOCHS = 50
DEFAULT_ID_BATCH = 64
DEFAULT_Q = 99.0
DEFAULT_TEST_FRACTION = 0.2


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(path: Path, command: str, argv: list[str], seeds: dict,
                    config_digests: dict, inputs: list[Path], outputs: list[Path]) -> None:
    doc = {
        "command": command,
        "argv": argv,
        "seeds": seeds,
        "config_digests": config_digests,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _id_config(epochs: int, batch_size: int, hidden_width: int, seed: int) -> TrainConfig:
    # identification = the first half of a full schedule, run at constant LR
    return TrainConfig(epochs_total=2 * epochs, batch_size=batch_size, seed=seed,
                       hidden_width=hidden_width, stop_at_first_drop=True)


def _full_config(epochs: int, batch_size: int, hidden_width: int, seed: int) -> TrainConfig:
    return TrainConfig(epochs_total=epochs, batch_size=batch_size, seed=seed,
                       hidden_width=hidden_width)


def _read_report_dir(report_dir: Path) -> IdentificationReport:
    """Rebuild an IdentificationReport from a persisted identify out-dir."""
    flags_path = report_dir / "flags.csv"
    summary_path = report_dir / "report.txt"
    flagged: set[int] = set()
    per_round: dict[int, int] = {}
    with open(flags_path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "sample_id,judged_by_round,aum,alpha,flagged":
            raise ParseError(f"{flags_path}: line 1: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 5:
                raise ParseError(f"{flags_path}: line {lineno}: expected 5 fields")
            try:
                sid, rnd, flag = int(parts[0]), int(parts[1]), int(parts[4])
            except ValueError as exc:
                raise ParseError(f"{flags_path}: line {lineno}: {exc}") from None
            per_round[sid] = rnd
            if flag:
                flagged.add(sid)
    summary: dict[str, str] = {}
    for line in summary_path.read_text(encoding="utf-8").splitlines():
        key, sep, value = line.partition("=")
        if sep:
            summary[key] = value
    try:
        return IdentificationReport(
            alpha_round1=float(summary["alpha_round1"]),
            alpha_round2=float(summary["alpha_round2"]),
            percentile_q=float(summary["percentile_q"]),
            flagged_ids=frozenset(flagged),
            per_round_assignment=per_round)
    except KeyError as exc:
        raise ParseError(f"{summary_path}: missing summary key {exc}") from None


# ---------------------------------------------------------------------------
# Subcommand handlers. Each returns the process exit code.
# ---------------------------------------------------------------------------

def _cmd_synth(args, argv) -> int:
    ds = generate_synthetic(args.classes, args.dim, args.n_per_class, args.spread, args.seed)
    out = Path(args.out)
    write_csv(ds, out)
    _write_manifest(out.with_name(out.name + ".manifest.json"), "synth", argv,
                    {"seed": args.seed}, {}, [], [out])
    print(f"wrote {len(ds)} samples ({ds.num_classes} classes, dim {ds.feature_dim}) to {out}")
    return 0


def _cmd_corrupt(args, argv) -> int:
    ds = read_csv(args.inp)
    noisy = NoiseSpec(model=args.model, rate=args.p, seed=args.seed).apply(ds)
    out = Path(args.out)
    write_csv(noisy, out)
    _write_manifest(out.with_name(out.name + ".manifest.json"), "corrupt", argv,
                    {"seed": args.seed}, {}, [Path(args.inp)], [out])
    changed = sum(1 for a, b in zip(ds.samples, noisy.samples)
                  if a.assigned_label != b.assigned_label)
    print(f"corrupted {changed}/{len(ds)} labels ({args.model}, p={args.p}) -> {out}")
    return 0


def _cmd_identify(args, argv) -> int:
    ds = read_csv(args.inp)
    cfg = _id_config(args.id_epochs, args.id_batch_size, args.hidden_width, args.seed)
    out_dir = Path(args.out_dir)
    report = run_identification(ds, cfg, args.q, args.seed, out_dir=out_dir,
                                trajectory_ids=args.trajectories or ())
    outputs = sorted(p for p in out_dir.rglob("*") if p.is_file())
    _write_manifest(out_dir / "manifest.json", "identify", argv,
                    {"seed": args.seed}, {"id_config": cfg.digest()},
                    [Path(args.inp)], outputs)
    print(f"alpha_round1={report.alpha_round1!r} alpha_round2={report.alpha_round2!r}")
    print(f"flagged={len(report.flagged_ids)} of {len(report.per_round_assignment)}")
    if report.metrics:
        print(f"precision={report.metrics['precision']!r} recall={report.metrics['recall']!r}")
    return 0


def _cmd_score(args, argv) -> int:
    report = _read_report_dir(Path(args.report))
    ds = read_csv(args.dataset)
    metrics = score_identification(report, ds)
    print(f"precision={metrics['precision']!r} recall={metrics['recall']!r} "
          f"flagged={len(report.flagged_ids)}")
    return 0


def _cmd_clean(args, argv) -> int:
    ds = read_csv(args.inp)
    report = _read_report_dir(Path(args.report))
    cleaned = clean_dataset(ds, report)
    out = Path(args.out)
    write_csv(cleaned, out)
    _write_manifest(out.with_name(out.name + ".manifest.json"), "clean", argv,
                    {}, {}, [Path(args.inp), Path(args.report) / "flags.csv"], [out])
    print(f"kept {len(cleaned)}/{len(ds)} samples -> {out}")
    return 0


def _cmd_retrain(args, argv) -> int:
    ds = read_csv(args.inp)
    if args.holdout:
        train_ds, test_ds = ds, read_csv(args.holdout)
        inputs = [Path(args.inp), Path(args.holdout)]
    else:
        train_ds, test_ds = split_holdout(ds, args.test_fraction, args.seed)
        inputs = [Path(args.inp)]
    batch = adjusted_batch_size(args.batch_size, args.removed_fraction)
    cfg = _full_config(args.epochs, batch, args.hidden_width, args.seed)
    model = init_model(train_ds.feature_dim, train_ds.num_classes, cfg)
    train(model, train_ds, cfg)
    err = evaluate(model, test_ds)
    print(f"holdout_error={err!r}")
    if args.out:
        out = Path(args.out)
        out.write_text(f"holdout_error={err!r}\n", encoding="utf-8")
        _write_manifest(out.with_name(out.name + ".manifest.json"), "retrain", argv,
                        {"seed": args.seed}, {"train_config": cfg.digest()}, inputs, [out])
    return 0


def _cmd_sweep(args, argv) -> int:
    ds = read_csv(args.inp)
    train_ds, test_ds = split_holdout(ds, args.test_fraction, args.seed)
    table = None
    if args.mode == "aum-ranked":
        id_cfg = _id_config(args.id_epochs, args.id_batch_size, args.hidden_width, args.seed)
        art = identification_artifacts(train_ds, id_cfg, DEFAULT_Q, args.seed)
        # rank by each sample's judging-round AUM so both rounds contribute
        merged = dict(art.table1.entries)
        for sid in art.plan.s1:
            merged[sid] = art.table2.entries[sid]
        table = AumTable(entries=merged, epochs_used=art.table1.epochs_used)
    cfg = _full_config(args.epochs, args.batch_size, args.hidden_width, args.seed)
    rows = removal_sweep(train_ds, test_ds, args.fractions, args.mode, cfg,
                         args.seed, aum_table=table)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("fraction,holdout_error\n")
        for f, e in rows:
            fh.write(f"{f!r},{e!r}\n")
    _write_manifest(out.with_name(out.name + ".manifest.json"), "sweep", argv,
                    {"seed": args.seed}, {"train_config": cfg.digest()},
                    [Path(args.inp)], [out])
    for f, e in rows:
        print(f"fraction={f!r} holdout_error={e!r}")
    return 0


def _cmd_consistency(args, argv) -> int:
    if len(args.seeds) < 2:
        raise InvalidArgumentError("consistency needs at least 2 seeds")
    ds = read_csv(args.inp)
    cfgs = [_id_config(args.id_epochs, args.id_batch_size, args.hidden_width, s)
            for s in args.seeds]
    matrix = consistency_check(ds, cfgs)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("seed," + ",".join(str(s) for s in args.seeds) + "\n")
        for i, s in enumerate(args.seeds):
            fh.write(str(s) + "," + ",".join(repr(float(v)) for v in matrix[i]) + "\n")
    _write_manifest(out.with_name(out.name + ".manifest.json"), "consistency", argv,
                    {"seeds": args.seeds}, {"id_config": cfgs[0].digest()},
                    [Path(args.inp)], [out])
    off_diag = matrix[~np.eye(len(cfgs), dtype=bool)]
    print(f"min_offdiagonal={float(off_diag.min())!r}")
    return 0


def _cmd_aum(args, argv) -> int:
    log = LogitLog.read(args.log)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = [Path(args.log)]
    threshold_ids: frozenset[int] = frozenset()
    if args.plan:
        plan = read_plan(args.plan)
        threshold_ids = plan.round_ids(args.round)
        inputs.append(Path(args.plan))
    table = compute_aum_table(log, threshold_ids)
    aum_path = out_dir / "aum.csv"
    with open(aum_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id,aum,is_threshold,assigned\n")
        for sid in table.ids():
            e = table.entries[sid]
            fh.write(f"{sid},{e.aum!r},{int(e.is_threshold)},{e.assigned_label}\n")
    outputs = [aum_path]
    lines = [f"samples={len(table.entries)}", f"epochs_used={table.epochs_used}"]
    if threshold_ids:
        alpha = compute_alpha(table, args.q)
        flagged = sorted(sid for sid, e in table.entries.items()
                         if not e.is_threshold and e.aum <= alpha)
        flags_path = out_dir / "flags.csv"
        with open(flags_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("sample_id,judged_by_round,aum,alpha,flagged\n")
            for sid in table.ids():
                e = table.entries[sid]
                if e.is_threshold:
                    continue
                fh.write(f"{sid},{args.round},{e.aum!r},{alpha!r},{int(e.aum <= alpha)}\n")
        outputs.append(flags_path)
        lines += [f"percentile_q={args.q!r}", f"alpha={alpha!r}", f"flagged={len(flagged)}"]
        print(f"alpha={alpha!r} flagged={len(flagged)}")
    summary_path = out_dir / "summary.txt"
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs.append(summary_path)
    _write_manifest(out_dir / "manifest.json", "aum", argv, {}, {}, inputs, outputs)
    print(f"samples={len(table.entries)} epochs_used={table.epochs_used}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aumclean",
        description="Identify and remove mislabeled training samples via "
                    "area-under-the-margin statistics with threshold samples.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p, id_run: bool):
        if id_run:
            p.add_argument("--id-epochs", type=int, default=DEFAULT_ID_EPOCHS,
                           help="epochs an identification round trains (constant LR)")
            p.add_argument("--id-batch-size", type=int, default=DEFAULT_ID_BATCH)
        p.add_argument("--hidden-width", type=int, default=128)

    p = sub.add_parser("synth", help="generate a synthetic Gaussian-cluster dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--spread", type=float, required=True,
                   help="RMS distance of samples from their class mean")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("corrupt", help="inject label noise, keeping ground truth")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model", choices=("uniform", "asymmetric"), required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_corrupt)

    p = sub.add_parser("identify", help="two-round threshold identification")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--q", type=float, default=DEFAULT_Q)
    add_train_flags(p, id_run=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trajectories", type=_int_list, default=None,
                   help="comma-separated sample ids to emit margin curves for")
    p.set_defaults(handler=_cmd_identify)

    p = sub.add_parser("score", help="precision/recall of a persisted report")
    p.add_argument("--report", required=True, help="identify out-dir")
    p.add_argument("--dataset", required=True, help="CSV with ground truth")
    p.set_defaults(handler=_cmd_score)

    p = sub.add_parser("clean", help="drop flagged samples from a dataset")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--report", required=True, help="identify out-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_clean)

    p = sub.add_parser("retrain", help="train on a dataset, print holdout error")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    p.add_argument("--removed-fraction", type=float, default=0.0,
                   help="fraction removed upstream; shrinks the batch to match iterations")
    add_train_flags(p, id_run=False)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--holdout", default=None, help="evaluation CSV; omit to split --in")
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--out", default=None, help="optional result file (enables manifest)")
    p.set_defaults(handler=_cmd_retrain)

    p = sub.add_parser("sweep", help="holdout error vs. removal fraction")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--fractions", type=_float_list, required=True)
    p.add_argument("--mode", choices=("aum-ranked", "random"), required=True)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    add_train_flags(p, id_run=True)
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("consistency", help="cross-seed AUM rank correlation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--seeds", type=_int_list, required=True)
    add_train_flags(p, id_run=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_consistency)

    p = sub.add_parser("aum", help="recompute AUMs (and flags, given a plan) from any log")
    p.add_argument("--log", required=True)
    p.add_argument("--plan", default=None)
    p.add_argument("--round", type=int, choices=(1, 2), default=1,
                   help="which plan subset marks threshold samples")
    p.add_argument("--q", type=float, default=DEFAULT_Q)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_aum)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, argv)
    except AumCleanError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
