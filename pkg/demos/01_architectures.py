"""
The three gap-filling networks
==============================

Builds the Baseline, CNN-LSTM and CNN-BiLSTM networks, prints their layer
tables and pushes one random batch through each to show the shapes.
Runs in a few seconds.
"""

import numpy as np

from gapfill.architectures import GapFillModel, baseline_spec, cnn_bilstm_spec, cnn_lstm_spec

# Every network is described by a NetworkSpec: input branches with their own
# layers, then a shared head. layer_table lists each layer with its output
# shape and trainable parameter count.
for name, spec in [("baseline", baseline_spec()), ("cnn-lstm", cnn_lstm_spec()), ("cnn-bilstm", cnn_bilstm_spec())]:
    print(f"\n{name}")
    for layer, s, shape, params in spec.layer_table():
        units = s.units or ""
        print(f"  {layer:10s} {s.kind.value:10s} {str(units):>4s} {str(shape):>12s} {params:>9,d}")
    print(f"  total {spec.count_parameters():,d}")

# The convolution kernel size is a config field. With kernel_size=3 only the
# convolution rows change.
print("\ncnn-lstm with kernel_size=3:", f"{cnn_lstm_spec(kernel_size=3).count_parameters():,d}")

# A GapFillModel bundles the networks a model kind needs: an onwards and a
# backwards network for the Baseline and the CNN-LSTM, a single network for
# the CNN-BiLSTM, which sees both sides of the gap at once.
rng = np.random.default_rng(0)
before, after = rng.random((4, 576)), rng.random((4, 576))
text = rng.random((4, 1248))
for kind in ("cnn-lstm", "cnn-bilstm"):
    model = GapFillModel.build(kind, seed=0)
    parts = {}
    pred = model.predict_scaled(before, after, text, "combined", parts if kind == "cnn-lstm" else None)
    print(f"\n{kind}: networks {sorted(model.networks)}, prediction {pred.shape}")
    if parts:
        print("  onwards", parts["onwards"].shape, "backwards", parts["backwards"].shape)

# Intermediate activations can be captured by name. For the CNN-BiLSTM the
# two convolution branches are concatenated along time before the BiLSTM.
seen = {}
GapFillModel.build("cnn-bilstm").networks["bilstm"].forward(
    {"tem": np.concatenate([before, after], axis=1), "text": text}, intermediates=seen
)
print("\nconcat", seen["head/0"].shape[1:], "bilstm", seen["head/1"].shape[1:])
