"""Raw sensor series, CSV I/O and 5-to-15-minute resampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError

FIVE_MIN = np.timedelta64(5, "m")
FIFTEEN_MIN = np.timedelta64(15, "m")


@dataclass
class RawSeries:
    """Regularly spaced readings of one sensor.

    ``values`` holds NaN exactly where ``gap_mask`` is set; both are
    normalised in ``__post_init__`` so either marker may be used on input.
    Timestamps are timezone-naive local time with minute resolution.
    """

    source_id: str
    timestamps: np.ndarray
    values: np.ndarray
    gap_mask: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[m]")
        self.values = np.array(self.values, dtype=np.float64)
        if self.timestamps.shape != self.values.shape or self.values.ndim != 1:
            raise DataError(f"{self.source_id}: timestamps and values must be 1-D of equal length")
        mask = ~np.isfinite(self.values)
        if self.gap_mask is not None:
            gm = np.asarray(self.gap_mask, dtype=bool)
            if gm.shape != mask.shape:
                raise DataError(f"{self.source_id}: gap_mask length mismatch")
            mask |= gm
        self.gap_mask = mask
        self.values[mask] = np.nan
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "m")):
            raise DataError(f"{self.source_id}: timestamps must be strictly increasing")

    def __len__(self):
        return len(self.values)

    @property
    def step(self) -> np.timedelta64:
        if len(self) < 2:
            raise DataError(f"{self.source_id}: cannot infer the step of a series shorter than 2")
        return self.timestamps[1] - self.timestamps[0]

    @property
    def is_regular(self) -> bool:
        return len(self) < 2 or bool(np.all(np.diff(self.timestamps) == self.step))

    @classmethod
    def regular(cls, source_id, start, step, values, gap_mask=None) -> "RawSeries":
        start = np.datetime64(start, "m")
        step = np.timedelta64(step, "m") if not isinstance(step, np.timedelta64) else step
        ts = start + np.arange(len(values)) * step
        return cls(source_id, ts, values, gap_mask)

    def slice_time(self, start, stop) -> "RawSeries":
        """Readings with ``start <= t < stop``."""
        sel = (self.timestamps >= np.datetime64(start, "m")) & (self.timestamps < np.datetime64(stop, "m"))
        return RawSeries(self.source_id, self.timestamps[sel], self.values[sel], self.gap_mask[sel])


def to_regular_grid(series: RawSeries, step=FIVE_MIN) -> RawSeries:
    """Place readings on a regular grid anchored at the first timestamp; absent rows become gaps."""
    if len(series) == 0:
        raise DataError(f"{series.source_id}: empty series")
    step = np.timedelta64(step, "m")
    offs = (series.timestamps - series.timestamps[0]) // step
    if np.any(series.timestamps[0] + offs * step != series.timestamps):
        raise DataError(f"{series.source_id}: timestamps are not on a {step} grid")
    n = int(offs[-1]) + 1
    values = np.full(n, np.nan)
    values[offs] = series.values
    return RawSeries.regular(series.source_id, series.timestamps[0], step, values)


def read_series_csv(path, source_id: str | None = None, step=FIVE_MIN) -> RawSeries:
    """Read a ``timestamp,value`` CSV; an empty value field marks a gap."""
    path = Path(path)
    source_id = source_id or path.stem
    stamps, values = [], []
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["timestamp", "value"]:
                raise DataError(f"{path}: expected header 'timestamp,value'")
            for row in reader:
                if not row:
                    continue
                stamps.append(row[0].strip())
                v = row[1].strip() if len(row) > 1 else ""
                values.append(float(v) if v else np.nan)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not stamps:
        raise DataError(f"{path}: no rows")
    try:
        ts = np.array(stamps, dtype="datetime64[m]")
    except ValueError as exc:
        raise DataError(f"{path}: bad timestamp ({exc})") from exc
    return to_regular_grid(RawSeries(source_id, ts, values), step)


def format_timestamp(t) -> str:
    return str(np.datetime64(t, "s"))


def write_series_csv(path, series: RawSeries, decimals: int = 4, flags=None, flag_name="imputed") -> Path:
    """Write ``timestamp,value`` rows; gaps are written as empty fields.

    ``flags`` adds a third 0/1 column named ``flag_name``.
    """
    path = Path(path)
    fmt = f"{{:.{decimals}f}}"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value"] + ([flag_name] if flags is not None else []))
        for i, (t, v) in enumerate(zip(series.timestamps, series.values)):
            row = [format_timestamp(t), "" if np.isnan(v) else fmt.format(v)]
            if flags is not None:
                row.append(int(bool(flags[i])))
            w.writerow(row)
    return path


def resample_15min(series: RawSeries) -> RawSeries:
    """Average 5-minute readings into clock-aligned 15-minute buckets.

    A bucket with any missing constituent, including constituents that fall
    outside the series, is a gap.
    """
    if len(series) == 0:
        raise DataError(f"{series.source_id}: empty series")
    if len(series) > 1 and (series.step != FIVE_MIN or not series.is_regular):
        raise DataError(f"{series.source_id}: resampling needs a regular 5-minute series")
    t0 = series.timestamps[0]
    lead = int(((t0 - t0.astype("datetime64[D]")) // FIVE_MIN) % 3)
    trail = (-(lead + len(series))) % 3
    vals = np.concatenate([np.full(lead, np.nan), series.values, np.full(trail, np.nan)])
    buckets = vals.reshape(-1, 3)
    mask = np.isnan(buckets).any(axis=1)
    means = np.full(len(buckets), np.nan)
    means[~mask] = buckets[~mask].mean(axis=1)
    start = t0 - lead * FIVE_MIN
    return RawSeries.regular(series.source_id, start, FIFTEEN_MIN, means, mask)
