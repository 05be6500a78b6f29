"""Shared fixtures: one seed-pinned synthetic corpus and the runs over it.

The session-scoped fixtures below are expensive (each identification run
trains two models), so they are computed once and shared; tests treat them
as read-only. Every constant here is part of the pinned experimental
setup: changing any seed or size invalidates the recorded expectations.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from aumclean import (
    TrainConfig,
    corrupt_asymmetric,
    corrupt_uniform,
    generate_synthetic,
    identification_artifacts,
    split_holdout,
)

FIXTURES = Path(__file__).parent / "fixtures"

_criterion_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for the end-of-run summary, then assert."""
    def check(tag: str, ok: bool, detail: str) -> None:
        line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
        _criterion_lines.append(line)
        assert ok, line
    return check


@pytest.fixture(scope="session")
def base_ds():
    # 5000 samples, 10 classes, 20 dims; spread chosen so clusters overlap
    # enough that a net must actually fit them but cleanly separable in the
    # mean-field sense
    return generate_synthetic(c=10, d=20, n_per_class=500, spread=0.7, seed=7)


@pytest.fixture(scope="session")
def split(base_ds):
    return split_holdout(base_ds, 0.2, seed=11)


@pytest.fixture(scope="session")
def train_ds(split):
    return split[0]


@pytest.fixture(scope="session")
def holdout(split):
    return split[1]


@pytest.fixture(scope="session")
def noisy_train(train_ds):
    return corrupt_uniform(train_ds, 0.4, seed=13)


@pytest.fixture(scope="session")
def asym_train(train_ds):
    return corrupt_asymmetric(train_ds, 0.4, seed=13)


@pytest.fixture(scope="session")
def id_cfg():
    # identification: stop at the first drop of a 100-epoch schedule, so 50
    # constant-LR epochs get logged
    return TrainConfig(epochs_total=100, batch_size=64, seed=0, stop_at_first_drop=True)


@pytest.fixture(scope="session")
def retrain_cfg():
    return TrainConfig(epochs_total=300, batch_size=256, seed=5)


@pytest.fixture(scope="session")
def noisy_art(noisy_train, id_cfg):
    return identification_artifacts(noisy_train, id_cfg, 99.0, seed=21)


@pytest.fixture(scope="session")
def asym_art(asym_train, id_cfg):
    return identification_artifacts(asym_train, id_cfg, 99.0, seed=21)


@pytest.fixture(scope="session")
def clean_art(train_ds, id_cfg):
    # identification run over the uncorrupted training split (0% noise)
    return identification_artifacts(train_ds, id_cfg, 99.0, seed=21)
