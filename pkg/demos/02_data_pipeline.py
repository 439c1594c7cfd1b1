"""
From raw sensor series to training windows
==========================================

Generates a small synthetic dataset, resamples it to 15 minutes, cuts
six-to-one and thirteen-day windows around the gaps and splits them by date.
Runs in a few seconds.
"""

import numpy as np

from gapfill.data import (
    SyntheticParams,
    fit_scaler,
    generate_synthetic,
    make_sample_set,
    resample_15min,
    split_by_dates,
)

# Three apartments over 45 days at 5-minute resolution, with sensor outages.
# The outdoor (TEXT) series is shared by all apartments.
# gap_rate is the expected number of outages per day.
params = SyntheticParams(gap_rate=0.05)
tem_raw, text_raw = generate_synthetic(seed=7, n_sources=3, days=45, params=params)
for s in tem_raw:
    print(f"{s.source_id}: {len(s)} readings, {s.gap_mask.mean():.1%} missing")

# Resampling averages each 15-minute bucket. A bucket with any missing
# reading is itself missing: gaps are excluded, never interpolated.
tem = [resample_15min(s) for s in tem_raw]
text = resample_15min(text_raw)
print("\n15-minute steps per source:", len(tem[0]))
for s in tem:
    print(f"{s.source_id}: {s.gap_mask.sum()} masked steps")

# Six-to-one windows feed the onwards/backwards networks: 576 TEM and 672 TEXT
# values in, 96 TEM values out. Thirteen-day windows feed the CNN-BiLSTM:
# six days either side of the target day. Any window touching a gap is dropped.
six = make_sample_set(tem, text, "six_to_one", stride=4)
back = make_sample_set(tem, text, "six_to_one", stride=4, direction="backwards")
thirteen = make_sample_set(tem, text, "thirteen_day", stride=4)
print(f"\nsix_to_one: {len(six)} windows, tem {six.tem_input.shape[1:]}, text {six.text_input.shape[1:]}")
print(f"thirteen_day: {len(thirteen)} windows, tem {thirteen.tem_input.shape[1:]}, text {thirteen.text_input.shape[1:]}")

# Backwards windows cover the same days with time reversed, so the backwards
# network reads the days after the gap first and predicts the day in reverse.
j, k = next(
    (j, k)
    for j in range(len(six))
    for k in np.flatnonzero(back.anchor == six.anchor[j])
    if back.source_id[k] == six.source_id[j]
)
print(f"{six.source_id[j]} {six.anchor[j]}: backwards target is the day reversed:",
      np.array_equal(back.target[k], six.target[j][::-1]))

# Each window belongs to the split containing its target day.
splits = {
    "train": [("2020-01-15", "2020-02-10")],
    "val": [("2020-02-11", "2020-02-18")],
    "test": [("2020-02-19", "2020-02-28")],
}
train, val, test = split_by_dates(thirteen, splits["train"], splits["val"], splits["test"])
print(f"\nsplit: train {len(train)}, val {len(val)}, test {len(test)}")

# Min-max bounds come from the training period of the seen sources only.
scaler = fit_scaler(tem, text, splits["train"])
print(f"TEM range {scaler.tem.min:.2f} to {scaler.tem.max:.2f} °C, TEXT range {scaler.text.min:.2f} to {scaler.text.max:.2f} °C")
scaled = train.scaled(scaler)
print(f"scaled training targets lie in [{scaled.target.min():.3f}, {scaled.target.max():.3f}]")
