"""aumclean: find mislabeled training data by the area under the margin.

Training dynamics separate clean from mislabeled samples: a sample whose
label fights the gradient signal of its lookalikes keeps a low or negative
margin, so the average margin over training epochs (the AUM) ranks samples
by label quality. Deliberately relabeled "threshold samples" calibrate a
cutoff, and everything scoring at or below it gets flagged.

The building blocks are importable directly; the `aumclean` console script
wires them into reproducible experiment steps.
"""

from .core import aum, margin, percentile_nearest_rank, running_average, spearman
from .data import (Dataset, NoiseSpec, Sample, corrupt_asymmetric, corrupt_uniform,
                   generate_synthetic, read_csv, split_holdout, write_csv)
from .errors import (AumCleanError, CorruptLogError, DivergedError,
                     InvalidArgumentError, ParseError, UndefinedCorrelationError)
from .kernels import BACKEND
from .logitlog import LogitLog
from .pipeline import (AumEntry, AumTable, IdentificationArtifacts,
                       IdentificationReport, adjusted_batch_size, clean_dataset,
                       compute_alpha, compute_aum_table, consistency_check,
                       emit_report, flag_mislabeled, identification_artifacts,
                       removal_sweep, run_identification, score_identification)
from .threshold import (ThresholdPlan, build_round_dataset, plan_rounds, read_plan,
                        threshold_count, write_plan)
from .trainer import (Model, TrainConfig, default_drops, evaluate, gradient_check,
                      init_model, loss_and_gradients, train)

__version__ = "0.1.0"

__all__ = [
    "AumCleanError", "AumEntry", "AumTable", "BACKEND", "CorruptLogError",
    "Dataset", "DivergedError", "IdentificationArtifacts", "IdentificationReport",
    "InvalidArgumentError", "LogitLog", "Model", "NoiseSpec", "ParseError",
    "Sample", "ThresholdPlan", "TrainConfig", "UndefinedCorrelationError",
    "adjusted_batch_size", "aum", "build_round_dataset", "clean_dataset",
    "compute_alpha", "compute_aum_table", "consistency_check", "corrupt_asymmetric",
    "corrupt_uniform", "default_drops", "emit_report", "evaluate", "flag_mislabeled",
    "generate_synthetic", "gradient_check", "identification_artifacts",
    "init_model", "loss_and_gradients", "margin", "percentile_nearest_rank",
    "plan_rounds", "read_csv", "read_plan", "removal_sweep", "run_identification",
    "running_average", "score_identification", "spearman", "split_holdout",
    "threshold_count", "train", "write_csv", "write_plan",
]
