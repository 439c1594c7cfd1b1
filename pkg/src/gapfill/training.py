"""Mini-batch training with MAE loss, MSE monitoring and early stopping."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Adam, Network, NetworkWeights
from .errors import ConfigError, DataError, DimensionError, NumericError

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_epochs: int = 100
    patience: int | None = 20
    batch_size: int = 512
    loss: str = "mae"
    monitor_metric: str = "mse"
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    restore_best: bool = True
    # splits each batch for memory only; the update is the same as for the full batch
    micro_batch: int | None = None
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs and batch_size must be >= 1")
        if self.patience is not None and not 1 <= self.patience <= self.max_epochs:
            raise ConfigError(f"patience must lie in [1, max_epochs], got {self.patience}")
        if self.loss != "mae" or self.monitor_metric != "mse":
            raise ConfigError("only loss='mae' with monitor_metric='mse' is supported")
        if self.micro_batch is not None and self.micro_batch < 1:
            raise ConfigError("micro_batch must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown training options {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    train_mae: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    wall_time: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.train_mae)

    def rows(self):
        for i in range(self.epochs):
            yield i + 1, self.train_mae[i], self.val_mae[i], self.val_mse[i]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mae", "val_mae", "val_mse"])
            for e, a, b, c in self.rows():
                w.writerow([e, repr(a), repr(b), repr(c)])
        return path


def epoch_shuffle(n_samples: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic permutation of ``range(n_samples)`` for one (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n_samples)


def batches(order, batch_size: int):
    """Consecutive chunks of ``order``; the final short chunk is kept."""
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _check_data(net: Network, inputs: dict, target, what: str):
    names = net.input_names
    if set(inputs) != set(names):
        raise DimensionError(f"{what}: network inputs are {names}, got {sorted(inputs)}")
    n = len(target)
    if n == 0:
        raise DataError(f"{what} set is empty")
    for k, v in inputs.items():
        if len(v) != n:
            raise DimensionError(f"{what}: input {k!r} has {len(v)} rows, target has {n}")
    if tuple(np.shape(target)[1:]) != tuple(net.spec.output_shape):
        raise DimensionError(
            f"{what}: target per-sample shape {np.shape(target)[1:]} != network output {net.spec.output_shape}"
        )


def evaluate_loss(net: Network, inputs: dict, target, batch_size: int = 256) -> tuple[float, float]:
    """(MAE, MSE) of the network in inference mode."""
    pred = net.predict(inputs, batch_size=batch_size).astype(np.float64)
    err = pred - np.asarray(target, dtype=np.float64)
    return float(np.mean(np.abs(err))), float(np.mean(err * err))


def train(net: Network, train_data, val_data, config: TrainConfig | None = None):
    """Fit ``net`` in place and return ``(best_weights, report)``.

    ``train_data`` and ``val_data`` are ``(inputs, target)`` pairs with inputs
    keyed by network branch name. Each epoch visits a seeded permutation of
    the training samples; the loss is the MAE averaged over every sample and
    output in a batch. Validation MAE drives early stopping: training halts
    once ``patience`` epochs pass without a strict improvement, and the
    weights of the best epoch are loaded back into ``net``.
    """
    cfg = config or TrainConfig()
    x_tr, y_tr = train_data
    x_va, y_va = val_data
    _check_data(net, x_tr, y_tr, "training")
    _check_data(net, x_va, y_va, "validation")
    x_tr = {k: np.asarray(v, dtype=net.dtype) for k, v in x_tr.items()}
    y_tr = np.asarray(y_tr, dtype=net.dtype)

    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    dropout_rng = np.random.default_rng([cfg.seed, 2**31 - 1])
    report = TrainReport()
    best = (np.inf, None)
    wait = 0
    n = len(y_tr)
    per_sample = int(np.prod(y_tr.shape[1:]))
    t0 = time.perf_counter()

    for epoch in range(1, cfg.max_epochs + 1):
        loss_sum = 0.0
        for idx in batches(epoch_shuffle(n, cfg.seed, epoch), cfg.batch_size):
            total = len(idx) * per_sample
            chunk = cfg.micro_batch or len(idx)
            acc = None
            for sub in batches(idx, chunk):
                xb = {k: v[sub] for k, v in x_tr.items()}
                err = net.forward(xb, training=True, rng=dropout_rng) - y_tr[sub]
                loss_sum += float(np.abs(err).sum(dtype=np.float64))
                grads = net.backward(np.sign(err) / net.dtype.type(total))
                if acc is None:
                    acc = {k: g.copy() for k, g in grads.items()}
                else:
                    for k, g in grads.items():
                        acc[k] += g
            opt.step(net.parameters(), acc)
        train_mae = loss_sum / (n * per_sample)
        val_mae, val_mse = evaluate_loss(net, x_va, y_va, cfg.eval_batch_size)
        if not all(np.isfinite(v) for v in (train_mae, val_mae, val_mse)):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        report.train_mae.append(train_mae)
        report.val_mae.append(val_mae)
        report.val_mse.append(val_mse)
        log.info("epoch %d train_mae=%.5f val_mae=%.5f val_mse=%.6f", epoch, train_mae, val_mae, val_mse)
        if val_mae < best[0]:
            best = (val_mae, net.get_weights())
            report.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if cfg.patience is not None and wait >= cfg.patience:
                report.stopped_early = True
                break

    weights: NetworkWeights = best[1]
    if cfg.restore_best:
        net.set_weights(weights)
    else:
        weights = net.get_weights()
    report.wall_time = time.perf_counter() - t0
    return weights, report
