"""Command-line behavior: files, manifests, determinism, exit codes.

Most tests drive cli.main() in process for speed; a few go through the
installed console script to cover the real entry point.
"""

import hashlib
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from aumclean import (
    LogitLog,
    TrainConfig,
    compute_aum_table,
    corrupt_uniform,
    generate_synthetic,
    identification_artifacts,
    read_csv,
    read_plan,
    score_identification,
)
from aumclean.cli import main

FIXTURES = Path(__file__).parent / "fixtures"


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture()
def synth_csv(tmp_path):
    path = tmp_path / "data.csv"
    rc = run_cli("synth", "--classes", 3, "--dim", 4, "--n-per-class", 20,
                 "--spread", 0.8, "--seed", 1, "--out", path)
    assert rc == 0
    return path


@pytest.fixture()
def noisy_csv(tmp_path, synth_csv):
    path = tmp_path / "noisy.csv"
    rc = run_cli("corrupt", "--in", synth_csv, "--model", "uniform",
                 "--p", 0.3, "--seed", 2, "--out", path)
    assert rc == 0
    return path


ID_FLAGS = ("--id-epochs", 5, "--id-batch-size", 16, "--hidden-width", 16)


@pytest.fixture()
def report_dir(tmp_path, noisy_csv):
    out = tmp_path / "report"
    rc = run_cli("identify", "--in", noisy_csv, *ID_FLAGS, "--seed", 3,
                 "--out-dir", out)
    assert rc == 0
    return out


class TestSynth:
    def test_matches_library_output(self, synth_csv):
        assert read_csv(synth_csv) == generate_synthetic(
            c=3, d=4, n_per_class=20, spread=0.8, seed=1)

    def test_manifest_checksums_verify(self, synth_csv):
        manifest = json.loads(
            synth_csv.with_name("data.csv.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seeds"] == {"seed": 1}
        assert "--classes" in manifest["argv"]
        digest = hashlib.sha256(synth_csv.read_bytes()).hexdigest()
        assert manifest["outputs"][str(synth_csv)] == digest
        assert "timestamp" in manifest


class TestCorrupt:
    def test_matches_library_output(self, synth_csv, noisy_csv, capsys):
        expected = corrupt_uniform(read_csv(synth_csv), 0.3, seed=2)
        assert read_csv(noisy_csv) == expected

    def test_p_zero_reproduces_input_bytes(self, tmp_path, synth_csv):
        out = tmp_path / "same.csv"
        rc = run_cli("corrupt", "--in", synth_csv, "--model", "uniform",
                     "--p", 0.0, "--seed", 9, "--out", out)
        assert rc == 0
        assert out.read_bytes() == synth_csv.read_bytes()

    def test_manifest_records_input(self, synth_csv, noisy_csv):
        manifest = json.loads(
            noisy_csv.with_name("noisy.csv.manifest.json").read_text())
        digest = hashlib.sha256(synth_csv.read_bytes()).hexdigest()
        assert manifest["inputs"][str(synth_csv)] == digest


class TestIdentify:
    def test_writes_report_layout(self, report_dir):
        for name in ("plan.txt", "round1.logits", "round2.logits",
                     "aum_round1.csv", "aum_round2.csv", "flags.csv",
                     "hist.csv", "report.txt", "manifest.json"):
            assert (report_dir / name).is_file(), name

    def test_reruns_byte_identical(self, tmp_path, noisy_csv, report_dir):
        again = tmp_path / "report2"
        rc = run_cli("identify", "--in", noisy_csv, *ID_FLAGS, "--seed", 3,
                     "--out-dir", again)
        assert rc == 0
        for name in ("flags.csv", "plan.txt", "round1.logits", "round2.logits",
                     "aum_round1.csv", "aum_round2.csv", "hist.csv", "report.txt"):
            assert (again / name).read_bytes() == (report_dir / name).read_bytes(), name

    def test_prints_metrics_when_truth_present(self, tmp_path, noisy_csv, capsys):
        rc = run_cli("identify", "--in", noisy_csv, *ID_FLAGS, "--seed", 3,
                     "--out-dir", tmp_path / "r")
        assert rc == 0
        out = capsys.readouterr().out
        assert "alpha_round1=" in out and "flagged=" in out
        assert "precision=" in out and "recall=" in out

    def test_manifest_covers_all_artifacts(self, report_dir):
        manifest = json.loads((report_dir / "manifest.json").read_text())
        listed = {name.rsplit("/", 1)[-1] for name in manifest["outputs"]}
        assert {"flags.csv", "plan.txt", "round1.logits", "report.txt"} <= listed
        assert "manifest.json" not in listed
        for name, digest in manifest["outputs"].items():
            assert hashlib.sha256(Path(name).read_bytes()).hexdigest() == digest


class TestScoreAndClean:
    def test_full_chain_matches_in_process(self, noisy_csv, report_dir, capsys):
        rc = run_cli("score", "--report", report_dir, "--dataset", noisy_csv)
        assert rc == 0
        printed = capsys.readouterr().out
        ds = read_csv(noisy_csv)
        cfg = TrainConfig(epochs_total=10, batch_size=16, seed=3,
                          hidden_width=16, stop_at_first_drop=True)
        art = identification_artifacts(ds, cfg, 99.0, seed=3)
        metrics = score_identification(art.report, ds)
        assert f"precision={metrics['precision']!r}" in printed
        assert f"recall={metrics['recall']!r}" in printed

    def test_clean_drops_exactly_the_flags(self, tmp_path, noisy_csv, report_dir):
        flags = (report_dir / "flags.csv").read_text().splitlines()[1:]
        n_flagged = sum(1 for l in flags if l.split(",")[4] == "1")
        out = tmp_path / "cleaned.csv"
        rc = run_cli("clean", "--in", noisy_csv, "--report", report_dir,
                     "--out", out)
        assert rc == 0
        cleaned = read_csv(out, num_classes=3)
        assert len(cleaned) == len(read_csv(noisy_csv)) - n_flagged


class TestRetrain:
    def test_prints_holdout_error(self, noisy_csv, capsys):
        rc = run_cli("retrain", "--in", noisy_csv, "--epochs", 4,
                     "--batch-size", 16, "--hidden-width", 16, "--seed", 4)
        assert rc == 0
        line = [l for l in capsys.readouterr().out.splitlines()
                if l.startswith("holdout_error=")]
        assert len(line) == 1
        err = float(line[0].split("=", 1)[1])
        assert 0.0 <= err <= 1.0

    def test_out_file_and_manifest(self, tmp_path, noisy_csv, synth_csv, capsys):
        out = tmp_path / "result.txt"
        rc = run_cli("retrain", "--in", noisy_csv, "--holdout", synth_csv,
                     "--epochs", 4, "--batch-size", 16, "--hidden-width", 16,
                     "--seed", 4, "--out", out)
        assert rc == 0
        assert out.read_text().startswith("holdout_error=")
        manifest = json.loads(out.with_name("result.txt.manifest.json").read_text())
        assert str(synth_csv) in manifest["inputs"]
        assert "train_config" in manifest["config_digests"]


class TestSweep:
    def test_csv_rows_and_determinism(self, tmp_path, noisy_csv, capsys):
        outs = []
        for name in ("s1.csv", "s2.csv"):
            out = tmp_path / name
            rc = run_cli("sweep", "--in", noisy_csv, "--fractions", "0.0,0.25",
                         "--mode", "random", "--epochs", 4, "--batch-size", 16,
                         *ID_FLAGS, "--seed", 5, "--out", out)
            assert rc == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()
        lines = outs[0].read_text().splitlines()
        assert lines[0] == "fraction,holdout_error"
        assert [l.split(",")[0] for l in lines[1:]] == ["0.0", "0.25"]

    def test_aum_ranked_mode_runs(self, tmp_path, noisy_csv):
        out = tmp_path / "sweep.csv"
        rc = run_cli("sweep", "--in", noisy_csv, "--fractions", "0.2",
                     "--mode", "aum-ranked", "--epochs", 4, "--batch-size", 16,
                     *ID_FLAGS, "--seed", 5, "--out", out)
        assert rc == 0
        assert len(out.read_text().splitlines()) == 2


class TestConsistency:
    def test_matrix_csv(self, tmp_path, noisy_csv, capsys):
        out = tmp_path / "consistency.csv"
        rc = run_cli("consistency", "--in", noisy_csv, "--seeds", "1,2",
                     *ID_FLAGS, "--out", out)
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "seed,1,2"
        first = lines[1].split(",")
        assert first[0] == "1" and float(first[1]) == 1.0
        assert "min_offdiagonal=" in capsys.readouterr().out


class TestAumSubcommand:
    def test_matches_in_process_table_exactly(self, tmp_path, capsys):
        out = tmp_path / "aum_out"
        rc = run_cli("aum", "--log", FIXTURES / "golden.logits",
                     "--plan", FIXTURES / "golden.plan", "--round", 1,
                     "--out-dir", out)
        assert rc == 0
        log = LogitLog.read(FIXTURES / "golden.logits")
        plan = read_plan(FIXTURES / "golden.plan")
        table = compute_aum_table(log, plan.s1)
        lines = (out / "aum.csv").read_text().splitlines()
        assert lines[0] == "sample_id,aum,is_threshold,assigned"
        assert len(lines) == 1 + len(table.entries)
        for line in lines[1:]:
            sid, aum_repr, is_thr, assigned = line.split(",")
            e = table.entries[int(sid)]
            assert aum_repr == repr(e.aum)  # exact, not approximate
            assert int(is_thr) == e.is_threshold
            assert int(assigned) == e.assigned_label
        assert (out / "flags.csv").is_file()
        assert (out / "summary.txt").is_file()

    def test_without_plan_no_flags_file(self, tmp_path):
        out = tmp_path / "aum_plain"
        rc = run_cli("aum", "--log", FIXTURES / "golden.logits", "--out-dir", out)
        assert rc == 0
        assert (out / "aum.csv").is_file()
        assert not (out / "flags.csv").exists()
        assert "epochs_used=8" in (out / "summary.txt").read_text()


class TestFailureModes:
    def test_missing_input_exits_one_with_error_line(self, tmp_path, capsys):
        rc = run_cli("corrupt", "--in", tmp_path / "nope.csv", "--model",
                     "uniform", "--p", 0.1, "--seed", 1,
                     "--out", tmp_path / "x.csv")
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("ERROR ")
        assert "nope.csv" in err

    def test_invalid_value_exits_one(self, synth_csv, tmp_path, capsys):
        rc = run_cli("corrupt", "--in", synth_csv, "--model", "uniform",
                     "--p", 1.5, "--seed", 1, "--out", tmp_path / "x.csv")
        assert rc == 1
        assert "ERROR InvalidArgumentError" in capsys.readouterr().err

    def test_unknown_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            run_cli("synth", "--bogus", 1)
        assert exc_info.value.code == 2

    def test_missing_subcommand_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            run_cli()
        assert exc_info.value.code == 2


class TestConsoleScript:
    def test_entry_point_installed_and_help_works(self):
        exe = shutil.which("aumclean")
        assert exe, "console script not on PATH"
        out = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        assert "identify" in out.stdout

    def test_subcommand_help(self):
        exe = shutil.which("aumclean")
        out = subprocess.run([exe, "identify", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert "--out-dir" in out.stdout
