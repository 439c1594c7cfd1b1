"""
Filling a missing day
=====================

Trains a CNN-BiLSTM for a few minutes on synthetic apartments, blanks one
day of a held-out period and fills it. The filled series is written to
``filled_day.csv`` in the working directory for plotting elsewhere.

A short training run like this one already tracks the daily cycle; the
bundled ``configs/learning_sanity.json`` trains with the full settings.
"""

import time

import numpy as np

from gapfill import metrics
from gapfill.architectures import GapFillModel, fill_gap, training_arrays
from gapfill.data import (
    RawSeries,
    fit_scaler,
    generate_synthetic,
    make_sample_set,
    resample_15min,
    split_by_dates,
    write_series_csv,
)
from gapfill.training import TrainConfig, train

# Two apartments over 50 days. Training days come first, then validation,
# and the last days are kept aside for the demo gap.
tem_raw, text_raw = generate_synthetic(seed=21, n_sources=2, days=50)
tem = [resample_15min(s) for s in tem_raw]
text = resample_15min(text_raw)
ranges = {"train": [("2020-01-15", "2020-02-14")], "val": [("2020-02-15", "2020-02-22")]}

samples = make_sample_set(tem, text, "thirteen_day", stride=12)
train_set, val_set, _ = split_by_dates(samples, ranges["train"], ranges["val"], [])
scaler = fit_scaler(tem, text, ranges["train"])
print(f"{len(train_set)} training and {len(val_set)} validation windows")

# One network sees six days either side of the gap plus the outdoor series.
model = GapFillModel.build("cnn-bilstm", seed=0, scaler=scaler)
config = TrainConfig(max_epochs=25, patience=8, batch_size=32, seed=0)
t0 = time.perf_counter()
_, report = train(
    model.networks["bilstm"],
    training_arrays("cnn-bilstm", train_set.scaled(scaler)),
    training_arrays("cnn-bilstm", val_set.scaled(scaler)),
    config,
)
print(f"{report.epochs} epochs in {time.perf_counter() - t0:.0f} s, best validation MAE {min(report.val_mae):.4f} (scaled)")

# Blank 2020-02-26 in the first apartment. The day and its six-day
# neighbourhood lie after the training and validation periods.
series = tem[0]
gap_start = np.datetime64("2020-02-26T00:00")
g = int((gap_start - series.timestamps[0]) // np.timedelta64(15, "m"))
truth = series.values[g : g + 96].copy()
before, after = series.values[g - 576 : g], series.values[g + 96 : g + 96 + 576]
text_window = text.values[g - 576 : g + 96 + 576]

pred = fill_gap(model, before, after, text_window)
err = pred.values - truth
print(f"\nfilled {series.source_id} {gap_start}: MAE {np.abs(err).mean():.3f} °C, max error {np.abs(err).max():.3f} °C")
print(f"STD ratio {metrics.stdr(pred.values[None], truth[None])[0]:.2f}")

# For scale: carrying the day before the gap forward.
naive = before[-96:]
print(f"yesterday's values instead: MAE {np.abs(naive - truth).mean():.3f} °C")

# Hourly view of the filled day.
print("\nhour  truth  filled")
for h in range(0, 24, 3):
    print(f"{h:4d}  {truth[4 * h]:5.2f}  {pred.values[4 * h]:6.2f}")

values = series.values.copy()
values[g : g + 96] = pred.values
flags = np.zeros(len(values), dtype=bool)
flags[g : g + 96] = True
out = slice(g - 96, g + 2 * 96)
write_series_csv(
    "filled_day.csv", RawSeries(series.source_id, series.timestamps[out], values[out]), decimals=4, flags=flags[out]
)
print("\nwrote filled_day.csv")
