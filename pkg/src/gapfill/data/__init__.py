"""Sensor series ingestion, resampling, scaling, windowing and splitting."""

from .scaling import MinMaxScaler, ScalerParams, fit_scaler
from .series import (
    FIFTEEN_MIN,
    FIVE_MIN,
    RawSeries,
    read_series_csv,
    resample_15min,
    to_regular_grid,
    write_series_csv,
)
from .synthetic import SyntheticParams, generate_synthetic
from .windows import (
    CONTEXT,
    DEFAULT_SPLITS,
    STEPS_PER_DAY,
    SampleSet,
    WindowKind,
    make_sample_set,
    make_windows,
    split_by_dates,
)

__all__ = [
    "CONTEXT",
    "FIFTEEN_MIN",
    "FIVE_MIN",
    "MinMaxScaler",
    "DEFAULT_SPLITS",
    "RawSeries",
    "STEPS_PER_DAY",
    "SampleSet",
    "ScalerParams",
    "SyntheticParams",
    "WindowKind",
    "fit_scaler",
    "generate_synthetic",
    "make_sample_set",
    "make_windows",
    "read_series_csv",
    "resample_15min",
    "split_by_dates",
    "to_regular_grid",
    "write_series_csv",
]
