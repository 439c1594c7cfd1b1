"""Sliding-window sample construction and date-range splits."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, DataError
from .scaling import ScalerParams
from .series import FIFTEEN_MIN, RawSeries

STEPS_PER_DAY = 96
CONTEXT_DAYS = 6
CONTEXT = CONTEXT_DAYS * STEPS_PER_DAY  # 576

DEFAULT_SPLITS = {
    "train": [("2020-01-15", "2021-01-14")],
    "val": [("2021-01-15", "2021-02-28"), ("2021-04-16", "2021-05-31")],
    "test": [("2021-03-01", "2021-04-15"), ("2021-06-01", "2021-08-15")],
}


class WindowKind(str, enum.Enum):
    SIX_TO_ONE = "six_to_one"
    THIRTEEN_DAY = "thirteen_day"

    @property
    def span(self) -> int:
        """Steps covered by one window, inputs and target included."""
        return (7 if self is WindowKind.SIX_TO_ONE else 13) * STEPS_PER_DAY

    @property
    def lengths(self) -> tuple[int, int]:
        """Per-sample (TEM input, TEXT input) lengths."""
        if self is WindowKind.SIX_TO_ONE:
            return CONTEXT, CONTEXT + STEPS_PER_DAY
        return 2 * CONTEXT, 2 * CONTEXT + STEPS_PER_DAY


@dataclass
class SampleSet:
    """Model-ready windows, one row per sample.

    For ``thirteen_day`` windows ``tem_input`` is the 6 days before the target
    day followed by the 6 days after it; ``text_input`` covers all 13 days.
    Backwards six-to-one samples are stored already time-reversed. ``anchor``
    is always the first timestamp of the target day in chronological time.
    """

    tem_input: np.ndarray
    text_input: np.ndarray
    target: np.ndarray
    source_id: np.ndarray
    anchor: np.ndarray
    window_kind: WindowKind
    direction: str = "onwards"

    def __post_init__(self):
        self.window_kind = WindowKind(self.window_kind)
        if self.direction not in ("onwards", "backwards"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        n = len(self.target)
        lt, lx = self.window_kind.lengths
        expected = {"tem_input": (n, lt), "text_input": (n, lx), "target": (n, STEPS_PER_DAY)}
        for name, shape in expected.items():
            if np.shape(getattr(self, name)) != shape:
                raise DataError(f"{name} must be {shape} for {self.window_kind.value}, got {np.shape(getattr(self, name))}")
        for name in ("source_id", "anchor"):
            if len(getattr(self, name)) != n:
                raise DataError(f"{name} has {len(getattr(self, name))} entries for {n} samples")

    def __len__(self):
        return len(self.target)

    def take(self, idx) -> "SampleSet":
        return replace(
            self,
            tem_input=self.tem_input[idx],
            text_input=self.text_input[idx],
            target=self.target[idx],
            source_id=self.source_id[idx],
            anchor=self.anchor[idx],
        )

    def scaled(self, scaler: ScalerParams, dtype=np.float32) -> "SampleSet":
        return replace(
            self,
            tem_input=scaler.tem.transform(self.tem_input).astype(dtype),
            text_input=scaler.text.transform(self.text_input).astype(dtype),
            target=scaler.tem.transform(self.target).astype(dtype),
        )

    @classmethod
    def empty(cls, window_kind, direction="onwards") -> "SampleSet":
        window_kind = WindowKind(window_kind)
        lt, lx = window_kind.lengths
        return cls(
            np.empty((0, lt)),
            np.empty((0, lx)),
            np.empty((0, STEPS_PER_DAY)),
            np.empty(0, dtype="U1"),
            np.empty(0, dtype="datetime64[m]"),
            window_kind,
            direction,
        )

    @classmethod
    def concat(cls, sets) -> "SampleSet":
        sets = list(sets)
        if not sets:
            raise DataError("nothing to concatenate")
        kinds = {(s.window_kind, s.direction) for s in sets}
        if len(kinds) != 1:
            raise DataError(f"cannot mix window kinds/directions {sorted(kinds)}")
        first = sets[0]
        return replace(
            first,
            tem_input=np.concatenate([s.tem_input for s in sets]),
            text_input=np.concatenate([s.text_input for s in sets]),
            target=np.concatenate([s.target for s in sets]),
            source_id=np.concatenate([s.source_id for s in sets]),
            anchor=np.concatenate([s.anchor for s in sets]),
        )

    def save(self, path) -> None:
        np.savez(
            path,
            tem_input=self.tem_input,
            text_input=self.text_input,
            target=self.target,
            source_id=self.source_id.astype(str),
            anchor=self.anchor.astype("datetime64[m]").astype(np.int64),
            meta=np.array([self.window_kind.value, self.direction]),
        )

    @classmethod
    def load(cls, path) -> "SampleSet":
        with np.load(path, allow_pickle=False) as z:
            kind, direction = (str(v) for v in z["meta"])
            return cls(
                z["tem_input"],
                z["text_input"],
                z["target"],
                z["source_id"],
                z["anchor"].astype("datetime64[m]"),
                WindowKind(kind),
                direction,
            )


def _align(tem: RawSeries, text: RawSeries):
    for s in (tem, text):
        if len(s) > 1 and (s.step != FIFTEEN_MIN or not s.is_regular):
            raise DataError(f"{s.source_id}: windowing needs a regular 15-minute series")
    if (tem.timestamps[0] - text.timestamps[0]) % FIFTEEN_MIN:
        raise DataError(f"{tem.source_id} and {text.source_id} are on offset grids")
    start = max(tem.timestamps[0], text.timestamps[0])
    stop = min(tem.timestamps[-1], text.timestamps[-1]) + FIFTEEN_MIN
    if stop <= start:
        raise DataError(f"{tem.source_id} and {text.source_id} do not overlap in time")
    return tem.slice_time(start, stop), text.slice_time(start, stop)


def make_windows(tem: RawSeries, text: RawSeries, window_kind="six_to_one", stride=1, direction="onwards") -> SampleSet:
    """Cut every stride-aligned, gap-free window out of a TEM/TEXT pair.

    Windows are placed at offsets ``0, stride, 2*stride, ...`` of the common
    time range; any window touching a gap in either series is dropped. With
    ``direction="backwards"`` (six-to-one only) each sample predicts the
    target day from the 6 following days, with inputs and target reversed.
    """
    window_kind = WindowKind(window_kind)
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if direction not in ("onwards", "backwards"):
        raise ConfigError(f"unknown direction {direction!r}")
    if direction == "backwards" and window_kind is not WindowKind.SIX_TO_ONE:
        raise ConfigError("backwards windows are only defined for six_to_one")
    tem, text = _align(tem, text)
    span = window_kind.span
    n = len(tem)
    if n < span:
        return SampleSet.empty(window_kind, direction)
    starts = np.arange(0, n - span + 1, stride)
    bad = np.concatenate([[0], np.cumsum(tem.gap_mask | text.gap_mask)])
    starts = starts[bad[starts + span] == bad[starts]]
    if len(starts) == 0:
        return SampleSet.empty(window_kind, direction)
    tw = sliding_window_view(tem.values, span)[starts]
    xw = sliding_window_view(text.values, span)[starts]
    day = STEPS_PER_DAY
    if window_kind is WindowKind.THIRTEEN_DAY:
        tem_in = np.concatenate([tw[:, :CONTEXT], tw[:, CONTEXT + day :]], axis=1)
        text_in = xw.copy()
        target = tw[:, CONTEXT : CONTEXT + day].copy()
        anchor = tem.timestamps[starts + CONTEXT]
    elif direction == "onwards":
        tem_in = tw[:, :CONTEXT].copy()
        text_in = xw.copy()
        target = tw[:, CONTEXT:].copy()
        anchor = tem.timestamps[starts + CONTEXT]
    else:
        tem_in = tw[:, :day - 1 : -1].copy()
        text_in = xw[:, ::-1].copy()
        target = tw[:, day - 1 :: -1].copy()
        anchor = tem.timestamps[starts]
    ids = np.full(len(starts), tem.source_id)
    return SampleSet(tem_in, text_in, target, ids, anchor, window_kind, direction)


def make_sample_set(tem_list, text: RawSeries, window_kind="six_to_one", stride=1, direction="onwards") -> SampleSet:
    """Windows from several sources pooled into one set, ordered by (source_id, anchor)."""
    sets = [make_windows(t, text, window_kind, stride, direction) for t in sorted(tem_list, key=lambda s: s.source_id)]
    if not sets:
        return SampleSet.empty(window_kind, direction)
    return SampleSet.concat(sets)


def _parse_ranges(ranges):
    out = []
    for lo, hi in ranges or []:
        lo, hi = np.datetime64(lo, "D"), np.datetime64(hi, "D")
        if hi < lo:
            raise ConfigError(f"date range {lo}..{hi} is reversed")
        out.append((lo, hi))
    return out


def split_by_dates(samples: SampleSet, train_ranges, val_ranges, test_ranges):
    """Assign samples to (train, val, test) by the date of their target day.

    Ranges are inclusive ``(first_day, last_day)`` pairs. Samples outside every
    range are discarded. Overlapping ranges raise ConfigError.
    """
    groups = [_parse_ranges(r) for r in (train_ranges, val_ranges, test_ranges)]
    flat = sorted(r for g in groups for r in g)
    for (lo1, hi1), (lo2, hi2) in zip(flat, flat[1:]):
        if lo2 <= hi1:
            raise ConfigError(f"date ranges {lo1}..{hi1} and {lo2}..{hi2} overlap")
    days = samples.anchor.astype("datetime64[D]")
    out = []
    for group in groups:
        sel = np.zeros(len(samples), dtype=bool)
        for lo, hi in group:
            sel |= (days >= lo) & (days <= hi)
        out.append(samples.take(np.flatnonzero(sel)))
    return tuple(out)
