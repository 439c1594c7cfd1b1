"""Evaluation metrics for batches of one-day predictions.

``P`` and ``T`` are ``(N, 96)`` arrays of predicted and true values in
original units. MSE, MAE and MAPE pool all ``N * 96`` entries; R² is computed
per step across samples; MSTDR averages per-sample standard-deviation ratios.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, MetricDomainError

__all__ = ["mse", "mae", "mape", "r2_per_step", "r2_mean", "stdr", "mstdr", "MetricsReport", "evaluate"]


def _pair(P, T):
    P = np.asarray(P, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if P.shape != T.shape:
        raise DimensionError(f"prediction shape {P.shape} != truth shape {T.shape}")
    if P.size == 0:
        raise DimensionError("empty evaluation batch")
    if not (np.isfinite(P).all() and np.isfinite(T).all()):
        raise MetricDomainError("metrics need finite predictions and truths")
    return P, T


def mse(P, T) -> float:
    P, T = _pair(P, T)
    return float(np.mean((P - T) ** 2))


def mae(P, T) -> float:
    P, T = _pair(P, T)
    return float(np.mean(np.abs(P - T)))


def mape(P, T) -> float:
    """Mean absolute percentage error, in percent. Any zero truth is an error."""
    P, T = _pair(P, T)
    if np.any(T == 0):
        raise MetricDomainError("MAPE is undefined where the true value is 0")
    return float(100.0 * np.mean(np.abs((P - T) / T)))


def _as_batch(P, T):
    P, T = _pair(P, T)
    if P.ndim == 1:
        P, T = P[None], T[None]
    if P.ndim != 2:
        raise DimensionError(f"expected (N, steps) arrays, got {P.shape}")
    return P, T


def r2_per_step(P, T) -> np.ndarray:
    """Coefficient of determination at each step, computed across the N samples."""
    P, T = _as_batch(P, T)
    if P.shape[0] < 2:
        raise MetricDomainError("per-step R² needs at least 2 samples")
    ss_res = np.sum((P - T) ** 2, axis=0)
    ss_tot = np.sum((T.mean(axis=0) - T) ** 2, axis=0)
    # a constant column can leave a rounding residue in ss_tot, so test the values
    zero = np.flatnonzero(np.ptp(T, axis=0) == 0)
    if zero.size:
        raise MetricDomainError(f"R² undefined: truth has zero variance at step {int(zero[0])}")
    return 1.0 - ss_res / ss_tot


def r2_mean(P, T) -> float:
    return float(np.mean(r2_per_step(P, T)))


def _row_std(X):
    # shifting by the first value is exact for constant rows, which then give 0
    return (X - X[:, :1]).std(axis=1)


def stdr(P, T) -> np.ndarray:
    """Per-sample ratio of prediction STD to truth STD (population STD over the row)."""
    P, T = _as_batch(P, T)
    sd_t = _row_std(T)
    zero = np.flatnonzero(sd_t == 0)
    if zero.size:
        raise MetricDomainError(f"STDR undefined: truth row {int(zero[0])} has zero standard deviation")
    return _row_std(P) / sd_t


def mstdr(P, T) -> float:
    return float(np.mean(stdr(P, T)))


@dataclass
class MetricsReport:
    mse: float
    mae: float
    mape: float
    r2_per_step: np.ndarray
    r2_mean: float
    mstdr: float
    n_samples: int
    by_population: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "n_samples": self.n_samples,
            "mse": self.mse,
            "mae": self.mae,
            "mape": self.mape,
            "r2_mean": self.r2_mean,
            "mstdr": self.mstdr,
            "r2_per_step": [float(v) for v in self.r2_per_step],
        }
        if self.by_population:
            d["by_population"] = {k: v.to_dict() for k, v in sorted(self.by_population.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_r2_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "r2"])
            for i, v in enumerate(self.r2_per_step):
                w.writerow([i, repr(float(v))])
        return path


def evaluate(P, T, populations=None) -> MetricsReport:
    """Full metric suite; ``populations`` labels each row for a per-group breakdown."""
    P, T = _as_batch(P, T)
    r2 = r2_per_step(P, T)
    report = MetricsReport(
        mse=mse(P, T),
        mae=mae(P, T),
        mape=mape(P, T),
        r2_per_step=r2,
        r2_mean=float(np.mean(r2)),
        mstdr=mstdr(P, T),
        n_samples=int(P.shape[0]),
    )
    if populations is not None:
        labels = np.asarray(populations)
        for lab in sorted(set(labels.tolist())):
            sel = labels == lab
            report.by_population[str(lab)] = evaluate(P[sel], T[sel])
    return report
