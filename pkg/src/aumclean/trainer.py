"""Single-hidden-layer MLP trainer, written from scratch on numpy.

SGD with Nesterov momentum and L2 weight decay added to the raw gradient,
step LR schedule, softmax cross-entropy. During training every sample's
logits are captured at its own forward pass (inside its minibatch, before
that minibatch's update), once per epoch, and appended to a LogitLog.

Seeding: a run's seed feeds numpy SeedSequence(seed).spawn(2); child 0
initializes parameters, child 1 drives the per-epoch shuffles. Identical
(dataset, config) therefore reproduce training bit-for-bit, including the
log. The LR at 1-indexed epoch e is lr_initial / lr_drop_factor^k where k
counts drop epochs strictly below e, so each drop takes effect on the epoch
after the listed one; with stop_at_first_drop the run ends at epoch
lr_drop_epochs[0] and the LR never changes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import kernels
from .data import Dataset, Sample
from .errors import DivergedError, InvalidArgumentError
from .logitlog import LogitLog

__all__ = ["TrainConfig", "Model", "init_model", "train", "evaluate",
           "gradient_check", "loss_and_gradients", "default_drops"]


def default_drops(epochs_total: int) -> list[int]:
    """Step-schedule drop epochs at 50% and 75% of the run, deduplicated."""
    raw = [epochs_total // 2, (3 * epochs_total) // 4]
    out: list[int] = []
    for e in raw:
        if 1 <= e < epochs_total and e not in out:
            out.append(e)
    return out


@dataclass(frozen=True)
class TrainConfig:
    epochs_total: int
    batch_size: int
    seed: int
    hidden_width: int = 128
    lr_drop_epochs: tuple[int, ...] | None = None
    lr_initial: float = 0.1
    lr_drop_factor: float = 10.0
    momentum: float = 0.9
    weight_decay: float = 1e-4
    stop_at_first_drop: bool = False

    def __post_init__(self) -> None:
        if self.epochs_total < 1:
            raise InvalidArgumentError(f"epochs_total must be >= 1, got {self.epochs_total}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.hidden_width < 1:
            raise InvalidArgumentError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.lr_initial <= 0 or self.lr_drop_factor <= 0:
            raise InvalidArgumentError("lr_initial and lr_drop_factor must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidArgumentError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidArgumentError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.lr_drop_epochs is None:
            object.__setattr__(self, "lr_drop_epochs", tuple(default_drops(self.epochs_total)))
        else:
            object.__setattr__(self, "lr_drop_epochs", tuple(self.lr_drop_epochs))
        drops = self.lr_drop_epochs
        if list(drops) != sorted(set(drops)):
            raise InvalidArgumentError(f"lr_drop_epochs must be strictly increasing, got {drops}")
        if drops and (drops[0] < 1 or drops[-1] >= self.epochs_total):
            raise InvalidArgumentError(
                f"lr_drop_epochs must lie in [1, epochs_total), got {drops} with epochs_total={self.epochs_total}")
        if self.stop_at_first_drop and not drops:
            raise InvalidArgumentError("stop_at_first_drop needs at least one drop epoch")

    def epochs_to_run(self) -> int:
        return self.lr_drop_epochs[0] if self.stop_at_first_drop else self.epochs_total

    def lr_at(self, epoch: int) -> float:
        if self.stop_at_first_drop:
            return self.lr_initial
        k = sum(1 for d in self.lr_drop_epochs if d < epoch)
        return self.lr_initial / self.lr_drop_factor ** k

    def digest(self) -> str:
        text = " ".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class Model:
    """Input -> ReLU(hidden) -> linear output. All parameters float64."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def feature_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.W2.shape[1]

    def parameters(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.W1 + self.b1, 0.0) @ self.W2 + self.b2


def init_model(d: int, c_out: int, cfg: TrainConfig) -> Model:
    """He-style init: weights ~ N(0, 2/fan_in), biases exactly zero."""
    if d < 1 or c_out < 2:
        raise InvalidArgumentError(f"need d >= 1 and c_out >= 2, got d={d}, c_out={c_out}")
    init_ss = np.random.SeedSequence(cfg.seed).spawn(2)[0]
    rng = np.random.default_rng(init_ss)
    h = cfg.hidden_width
    W1 = rng.standard_normal((d, h)) * np.sqrt(2.0 / d)
    W2 = rng.standard_normal((h, c_out)) * np.sqrt(2.0 / h)
    return Model(W1=W1, b1=np.zeros(h), W2=W2, b2=np.zeros(c_out))


def train(model: Model, ds: Dataset, cfg: TrainConfig, log: LogitLog | None = None) -> Model:
    """Run the schedule, mutating the model in place; returns the model.

    Appends one complete epoch of per-sample logits to `log` per epoch run.
    Raises DivergedError at the first non-finite minibatch loss.
    """
    if ds.num_classes != model.num_outputs:
        raise InvalidArgumentError(
            f"dataset has {ds.num_classes} classes but model emits {model.num_outputs}")
    if log is not None and log.num_classes != model.num_outputs:
        raise InvalidArgumentError(
            f"log expects {log.num_classes} classes but model emits {model.num_outputs}")
    X = np.ascontiguousarray(ds.features_matrix())
    labels = ds.assigned_labels()
    ids = ds.ids()
    n = X.shape[0]
    shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)[1]
    shuffle_rng = np.random.default_rng(shuffle_ss)
    velocities = tuple(np.zeros_like(p) for p in model.parameters())
    out_logits = np.empty((n, model.num_outputs))
    for epoch in range(1, cfg.epochs_to_run() + 1):
        lr = cfg.lr_at(epoch)
        perm = shuffle_rng.permutation(n)
        bad_batch = kernels.sgd_epoch(
            X, labels, perm, cfg.batch_size,
            model.W1, model.b1, model.W2, model.b2,
            velocities[0], velocities[1], velocities[2], velocities[3],
            lr, cfg.momentum, cfg.weight_decay, out_logits)
        if bad_batch >= 0:
            raise DivergedError(epoch=epoch, lr=lr)
        if log is not None:
            log.append_epoch(epoch, ids, labels, out_logits)
    return model


def evaluate(model: Model, ds: Dataset) -> float:
    """Fraction of samples whose argmax logit misses the assigned label.

    A model with one extra output (the fake threshold class) may be
    evaluated on the unwidened dataset: the extra logit competes in the
    argmax but can never be correct. Argmax ties break toward the lowest
    class index.
    """
    if model.num_outputs not in (ds.num_classes, ds.num_classes + 1):
        raise InvalidArgumentError(
            f"model emits {model.num_outputs} classes, dataset has {ds.num_classes}")
    pred = np.argmax(model.logits(ds.features_matrix()), axis=1)
    return float(np.mean(pred != ds.assigned_labels()))


def loss_and_gradients(model: Model, X: np.ndarray, y: np.ndarray
                       ) -> tuple[float, tuple[np.ndarray, ...]]:
    """Mean softmax cross-entropy and its analytic gradients (no decay term)."""
    n = X.shape[0]
    Z1 = X @ model.W1 + model.b1
    H = np.maximum(Z1, 0.0)
    Z2 = H @ model.W2 + model.b2
    zmax = Z2.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(Z2 - zmax).sum(axis=1)) + zmax[:, 0]
    loss = float(np.mean(logsumexp - Z2[np.arange(n), y]))
    G = np.exp(Z2 - zmax)
    G /= G.sum(axis=1, keepdims=True)
    G[np.arange(n), y] -= 1.0
    G /= n
    gW2 = H.T @ G
    gb2 = G.sum(axis=0)
    GH = G @ model.W2.T
    GH[Z1 <= 0.0] = 0.0
    gW1 = X.T @ GH
    gb1 = GH.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def gradient_check(model: Model, batch: Sequence[Sample], tolerance: float = 1e-4,
                   num_params: int = 200, seed: int = 0) -> float:
    """Worst relative disagreement between analytic and numeric gradients.

    Central differences with step 1e-5 on at least `num_params` randomly
    sampled parameters (all of them when the model is smaller). Purely
    diagnostic: the return value is what callers compare against
    `tolerance`; the argument documents the acceptance threshold at the
    call site and a healthy backward pass sits orders of magnitude below
    the default.
    """
    if not batch:
        raise InvalidArgumentError("gradient check needs a non-empty batch")
    X = np.stack([s.features for s in batch]).astype(np.float64)
    y = np.array([s.assigned_label for s in batch], dtype=np.int64)
    _, grads = loss_and_gradients(model, X, y)
    params = model.parameters()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    take = min(num_params, total)
    chosen = rng.choice(total, size=take, replace=False)
    step = 1e-5
    worst = 0.0
    for flat_idx in chosen:
        t, offset = 0, int(flat_idx)
        while offset >= sizes[t]:
            offset -= sizes[t]
            t += 1
        p = params[t]
        idx = np.unravel_index(offset, p.shape)
        orig = p[idx]
        p[idx] = orig + step
        up, _ = loss_and_gradients(model, X, y)
        p[idx] = orig - step
        down, _ = loss_and_gradients(model, X, y)
        p[idx] = orig
        numeric = (up - down) / (2.0 * step)
        analytic = float(grads[t][idx])
        # floor keeps finite-difference noise on near-zero gradients from
        # masquerading as disagreement
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, rel)
    return worst
