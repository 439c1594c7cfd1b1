from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateScalerError
from .series import RawSeries


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map sending ``min`` to 0 and ``max`` to 1."""

    min: float
    max: float

    def __post_init__(self):
        if not (np.isfinite(self.min) and np.isfinite(self.max)) or self.max <= self.min:
            raise DegenerateScalerError(f"scaler needs max > min, got min={self.min}, max={self.max}")

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        v = np.asarray(values, dtype=np.float64)
        v = v[np.isfinite(v)]
        if v.size == 0 or v.min() == v.max():
            raise DegenerateScalerError("cannot fit a scaler on fewer than two distinct values")
        return cls(float(v.min()), float(v.max()))

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.min) / (self.max - self.min)

    def inverse(self, x):
        return np.asarray(x, dtype=np.float64) * (self.max - self.min) + self.min


@dataclass(frozen=True)
class ScalerParams:
    tem: MinMaxScaler
    text: MinMaxScaler

    def to_dict(self) -> dict:
        return {"tem": [self.tem.min, self.tem.max], "text": [self.text.min, self.text.max]}

    @classmethod
    def from_dict(cls, d) -> "ScalerParams":
        return cls(MinMaxScaler(*d["tem"]), MinMaxScaler(*d["text"]))


def _in_ranges(series: RawSeries, ranges):
    if ranges is None:
        return series.values
    days = series.timestamps.astype("datetime64[D]")
    sel = np.zeros(len(series), dtype=bool)
    for lo, hi in ranges:
        sel |= (days >= np.datetime64(lo, "D")) & (days <= np.datetime64(hi, "D"))
    return series.values[sel]


def fit_scaler(tem_series, text_series: RawSeries, ranges=None) -> ScalerParams:
    """Fit one min/max per temperature kind over all sources.

    ``ranges`` restricts the fit to inclusive ``(first_day, last_day)`` date
    ranges, normally the training split, so no validation or test value leaks
    into the scaling.
    """
    if isinstance(tem_series, RawSeries):
        tem_series = [tem_series]
    tem_vals = np.concatenate([_in_ranges(s, ranges) for s in tem_series])
    return ScalerParams(MinMaxScaler.fit(tem_vals), MinMaxScaler.fit(_in_ranges(text_series, ranges)))
