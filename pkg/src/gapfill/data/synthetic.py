"""Synthetic indoor/outdoor temperature generator.

Stands in for private building-monitoring data. The outdoor series is an
annual plus daily sinusoid with AR(1) weather noise. Each apartment follows
the outdoor temperature through a first-order thermal lag, adds daily and
weekly occupancy cycles, and is pulled towards its setpoint while the
heating season is on, which flattens its variability in winter.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import lfilter

from ..errors import ConfigError
from .series import RawSeries

MINUTES_PER_DAY = 24 * 60


@dataclass(frozen=True)
class SyntheticParams:
    start: str = "2020-01-15"
    step_minutes: int = 5
    # outdoor
    text_mean: float = 13.0
    text_seasonal_amp: float = 11.0
    text_coldest_doy: float = 15.0
    text_daily_amp: float = 5.0
    text_peak_hour: float = 15.0
    text_ar_phi: float = 0.995
    text_noise_sd: float = 0.15
    # indoor
    setpoint: float = 21.5
    setpoint_spread: float = 1.0
    gain: float = 0.35
    gain_spread: float = 0.08
    lag_hours: float = 2.0
    heating_threshold: float = 12.0
    heating_damping: float = 0.35
    occupancy_daily_amp: float = 0.4
    occupancy_weekly_amp: float = 0.25
    tem_noise_sd: float = 0.05
    site_offset: float = 0.0
    # gaps
    gap_rate: float = 0.0
    gap_mean_days: float = 0.64
    gap_sd_days: float = 0.74
    source_prefix: str = "S"
    # first source index; a second population sharing the outdoor series starts past the first
    source_start: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def __post_init__(self):
        if self.step_minutes <= 0 or MINUTES_PER_DAY % self.step_minutes:
            raise ConfigError(f"step_minutes must divide a day, got {self.step_minutes}")
        if not 0 <= self.text_ar_phi < 1:
            raise ConfigError("text_ar_phi must lie in [0, 1)")
        if min(self.text_noise_sd, self.tem_noise_sd, self.gap_rate) < 0:
            raise ConfigError("noise levels and gap_rate must be non-negative")
        if self.gap_mean_days <= 0 or self.gap_sd_days < 0:
            raise ConfigError("gap duration distribution needs mean > 0 and sd >= 0")
        if self.source_start < 1:
            raise ConfigError("source_start must be >= 1")
        if self.lag_hours < 0 or not 0 <= self.heating_damping <= 1:
            raise ConfigError("lag_hours must be >= 0 and heating_damping in [0, 1]")


def _ar1(rng, n, phi, sd):
    if sd == 0:
        return np.zeros(n)
    return lfilter([1.0], [1.0, -phi], rng.normal(0.0, sd, n))


def _lag(x, step_minutes, lag_hours):
    if lag_hours == 0:
        return x.copy()
    alpha = 1.0 - np.exp(-step_minutes / (60.0 * lag_hours))
    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * x[0]])
    return y


def _inject_gaps(rng, n, p: SyntheticParams, days):
    mask = np.zeros(n, dtype=bool)
    if p.gap_rate == 0:
        return mask
    steps_per_day = MINUTES_PER_DAY // p.step_minutes
    sigma2 = np.log1p((p.gap_sd_days / p.gap_mean_days) ** 2)
    mu = np.log(p.gap_mean_days) - sigma2 / 2
    for _ in range(rng.poisson(p.gap_rate * days)):
        start = rng.integers(0, n)
        length = max(1, int(round(rng.lognormal(mu, np.sqrt(sigma2)) * steps_per_day)))
        mask[start : start + length] = True
    return mask


def generate_synthetic(seed: int, n_sources: int, days: int, params: SyntheticParams | None = None):
    """Return ``(tem_series_list, text_series)`` at ``params.step_minutes`` spacing.

    Output is a pure function of the arguments. Source ids are
    ``f"{params.source_prefix}{k:02d}"`` for ``k`` counting ``n_sources`` up
    from ``params.source_start``; source ``k`` always draws from the same
    random stream, and the outdoor series depends only on ``seed`` and the
    outdoor parameters.
    """
    p = params or SyntheticParams()
    if days < 14:
        raise ConfigError(f"synthetic data needs at least 14 days, got {days}")
    if n_sources < 1:
        raise ConfigError("n_sources must be >= 1")
    steps_per_day = MINUTES_PER_DAY // p.step_minutes
    n = days * steps_per_day
    start = np.datetime64(p.start, "m")
    ts = start + np.arange(n) * np.timedelta64(p.step_minutes, "m")
    day_of_year = (ts - ts.astype("datetime64[Y]")).astype(np.float64) / MINUTES_PER_DAY
    hour = (ts - ts.astype("datetime64[D]")).astype(np.float64) / 60.0
    weekday = ((ts.astype("datetime64[D]").astype(np.int64) + 3) % 7).astype(np.float64)  # Monday = 0

    seasonal = p.text_mean - p.text_seasonal_amp * np.cos(2 * np.pi * (day_of_year - p.text_coldest_doy) / 365.25)
    rng_text = np.random.default_rng([seed, 0])
    text = (
        seasonal
        + p.text_daily_amp * np.cos(2 * np.pi * (hour - p.text_peak_hour) / 24.0)
        + _ar1(rng_text, n, p.text_ar_phi, p.text_noise_sd)
    )
    lagged = _lag(text, p.step_minutes, p.lag_hours)
    heating = 1.0 / (1.0 + np.exp(seasonal - p.heating_threshold))
    flatten = 1.0 - heating * (1.0 - p.heating_damping)

    tem_list = []
    for k in range(p.source_start, p.source_start + n_sources):
        rng = np.random.default_rng([seed, k])
        setpoint = p.setpoint + p.site_offset + rng.uniform(-1, 1) * p.setpoint_spread
        gain = p.gain + rng.uniform(-1, 1) * p.gain_spread
        occ_phase = rng.uniform(17.0, 21.0)
        week_phase = rng.uniform(0.0, 7.0)
        occupancy = p.occupancy_daily_amp * np.cos(2 * np.pi * (hour - occ_phase) / 24.0)
        occupancy += p.occupancy_weekly_amp * np.cos(2 * np.pi * (weekday + hour / 24.0 - week_phase) / 7.0)
        noise = _ar1(rng, n, 0.9, p.tem_noise_sd)
        free = gain * (lagged - p.text_mean) + occupancy + noise
        tem = setpoint + flatten * free
        mask = _inject_gaps(rng, n, p, days)
        tem_list.append(RawSeries(f"{p.source_prefix}{k:02d}", ts, tem, mask))
    text_series = RawSeries("TEXT", ts, text)
    return tem_list, text_series
