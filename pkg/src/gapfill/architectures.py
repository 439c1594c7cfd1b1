"""The three gap-filling models and the rules that merge forward and backward forecasts.

* ``baseline``: stacked LSTM one-step forecaster applied recursively, one
  network on chronological data and one on reversed data, merged with
  linearly decreasing weights.
* ``cnn-lstm``: two CNN+LSTM networks (onwards and backwards) that each emit
  the whole day at once, merged with sigmoid weights.
* ``cnn-bilstm``: one CNN+BiLSTM network reading the 6 days before and after
  the gap together.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.scaling import ScalerParams
from .data.windows import CONTEXT, STEPS_PER_DAY, SampleSet, WindowKind
from .engine import serialize
from .engine.layers import LayerKind, LayerSpec
from .engine.network import Branch, Network, NetworkSpec
from .errors import ConfigError, DataError, DimensionError, UsageError

DAY = STEPS_PER_DAY
TEXT_ONE_SIDE = CONTEXT + DAY  # 672
TEXT_FULL = 2 * CONTEXT + DAY  # 1248
DROPOUT_RATE = 0.1


class ModelKind(str, enum.Enum):
    BASELINE = "baseline"
    CNN_LSTM = "cnn-lstm"
    CNN_BILSTM = "cnn-bilstm"


class Direction(str, enum.Enum):
    ONWARDS = "onwards"
    BACKWARDS = "backwards"
    COMBINED = "combined"


def _conv_branch(kernel_size):
    return (
        LayerSpec(LayerKind.CONV1D, units=16, kernel_size=kernel_size),
        LayerSpec(LayerKind.RELU),
        LayerSpec(LayerKind.CONV1D, units=32, kernel_size=kernel_size),
        LayerSpec(LayerKind.RELU),
        LayerSpec(LayerKind.AVGPOOL1D, pool_size=2),
    )


def _day_head(recurrent: LayerSpec):
    return (
        LayerSpec(LayerKind.CONCAT),
        recurrent,
        LayerSpec(LayerKind.DROPOUT, dropout_rate=DROPOUT_RATE),
        LayerSpec(LayerKind.DENSE, units=1),
        LayerSpec(LayerKind.DROPOUT, dropout_rate=DROPOUT_RATE),
        LayerSpec(LayerKind.FLATTEN),
        LayerSpec(LayerKind.DENSE, units=DAY),
    )


def baseline_spec(dropout_rate: float = DROPOUT_RATE) -> NetworkSpec:
    head = (
        LayerSpec(LayerKind.LSTM, units=256, return_sequences=True),
        LayerSpec(LayerKind.DROPOUT, dropout_rate=dropout_rate),
        LayerSpec(LayerKind.LSTM, units=128, return_sequences=True),
        LayerSpec(LayerKind.LSTM, units=64, return_sequences=False),
        LayerSpec(LayerKind.DENSE, units=1),
    )
    return NetworkSpec((Branch("tem", (CONTEXT, 1)),), head, (1, 1))


def cnn_lstm_spec(kernel_size: int = 1) -> NetworkSpec:
    branches = (
        Branch("tem", (CONTEXT, 1), _conv_branch(kernel_size)),
        Branch("text", (TEXT_ONE_SIDE, 1), _conv_branch(kernel_size)),
    )
    return NetworkSpec(branches, _day_head(LayerSpec(LayerKind.LSTM, units=16)), (DAY, 1))


def cnn_bilstm_spec(kernel_size: int = 1) -> NetworkSpec:
    branches = (
        Branch("tem", (2 * CONTEXT, 1), _conv_branch(kernel_size)),
        Branch("text", (TEXT_FULL, 1), _conv_branch(kernel_size)),
    )
    return NetworkSpec(branches, _day_head(LayerSpec(LayerKind.BILSTM, units=16)), (DAY, 1))


def build_baseline(seed: int = 0, dropout_rate: float = DROPOUT_RATE, dtype=np.float32) -> Network:
    """Stacked LSTM one-step forecaster: 576 TEM values in, the next value out."""
    return Network(baseline_spec(dropout_rate), seed=seed, dtype=dtype)


def build_cnn_lstm(seed: int = 0, kernel_size: int = 1, dtype=np.float32) -> Network:
    """TEM (576,1) and TEXT (672,1) through parallel CNNs, then LSTM to a (96,1) day."""
    return Network(cnn_lstm_spec(kernel_size), seed=seed, dtype=dtype)


def build_cnn_bilstm(seed: int = 0, kernel_size: int = 1, dtype=np.float32) -> Network:
    """TEM (1152,1) and TEXT (1248,1) through parallel CNNs, then BiLSTM to a (96,1) day."""
    return Network(cnn_bilstm_spec(kernel_size), seed=seed, dtype=dtype)


def linear_weights(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"linear combination needs n >= 2, got {n}")
    return np.arange(n) / (n - 1)


def sigmoid_weights(n: int = DAY) -> np.ndarray:
    x = np.linspace(-6.0, 6.0, n)
    return 1.0 / (1.0 + np.exp(-x))


def combine_linear(a, b) -> np.ndarray:
    """``(1 - c_i) a_i + c_i b_i`` with ``c_i = i / (n - 1)`` along the last axis."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"cannot combine shapes {a.shape} and {b.shape}")
    c = linear_weights(a.shape[-1])
    return (1.0 - c) * a + c * b


def combine_sigmoid(f, b) -> np.ndarray:
    """``(1 - s_i) f_i + s_i b_i`` with sigmoid weights over a 96-point grid from -6 to 6."""
    f = np.asarray(f, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if f.shape != b.shape:
        raise DimensionError(f"cannot combine shapes {f.shape} and {b.shape}")
    if f.shape[-1] != DAY:
        raise DimensionError(f"sigmoid combination needs {DAY} steps, got {f.shape[-1]}")
    s = sigmoid_weights(DAY)
    return (1.0 - s) * f + s * b


def recursive_forecast(net: Network, context, steps: int = DAY, batch_size: int = 128) -> np.ndarray:
    """Roll a one-step forecaster forward ``steps`` times over a sliding window.

    ``context`` is ``(N, L)``; each prediction is appended to the window and
    the oldest value dropped. Returns ``(N, steps)``.
    """
    window = np.asarray(context, dtype=net.dtype).copy()
    out = np.empty((window.shape[0], steps), dtype=net.dtype)
    for s in range(steps):
        y = net.predict({"tem": window}, batch_size=batch_size).reshape(-1)
        out[:, s] = y
        window[:, :-1] = window[:, 1:]
        window[:, -1] = y
    return out


def training_arrays(kind, samples: SampleSet):
    """``(inputs, target)`` arrays that train one network of ``kind`` on ``samples``."""
    kind = ModelKind(kind)
    want = WindowKind.THIRTEEN_DAY if kind is ModelKind.CNN_BILSTM else WindowKind.SIX_TO_ONE
    if samples.window_kind is not want:
        raise DataError(f"{kind.value} trains on {want.value} windows, got {samples.window_kind.value}")
    if kind is ModelKind.BASELINE:
        return {"tem": samples.tem_input}, samples.target[:, :1, None]
    return {"tem": samples.tem_input, "text": samples.text_input}, samples.target[:, :, None]


@dataclass
class Prediction:
    """One filled day in original units."""

    values: np.ndarray
    model_kind: ModelKind
    direction: Direction
    weights: np.ndarray | None = None
    onwards: np.ndarray | None = None
    backwards: np.ndarray | None = None


class GapFillModel:
    """A model kind, its trained networks and the scaler they were trained with.

    Networks are keyed ``"onwards"``/``"backwards"`` for the two-network
    models and ``"bilstm"`` for the CNN-BiLSTM.
    """

    def __init__(self, kind, networks: dict, scaler: ScalerParams | None = None):
        self.kind = ModelKind(kind)
        need = {"bilstm"} if self.kind is ModelKind.CNN_BILSTM else {"onwards", "backwards"}
        if set(networks) != need:
            raise ConfigError(f"{self.kind.value} needs networks {sorted(need)}, got {sorted(networks)}")
        self.networks = dict(networks)
        self.scaler = scaler

    @classmethod
    def build(cls, kind, seed: int = 0, kernel_size: int = 1, scaler=None) -> "GapFillModel":
        kind = ModelKind(kind)
        if kind is ModelKind.CNN_BILSTM:
            return cls(kind, {"bilstm": build_cnn_bilstm(seed, kernel_size)}, scaler)
        if kind is ModelKind.CNN_LSTM:
            nets = {"onwards": build_cnn_lstm(seed, kernel_size), "backwards": build_cnn_lstm(seed + 1, kernel_size)}
        else:
            nets = {"onwards": build_baseline(seed), "backwards": build_baseline(seed + 1)}
        return cls(kind, nets, scaler)

    @property
    def directions(self) -> tuple[Direction, ...]:
        if self.kind is ModelKind.CNN_BILSTM:
            return (Direction.COMBINED,)
        return (Direction.ONWARDS, Direction.BACKWARDS, Direction.COMBINED)

    def count_parameters(self) -> dict:
        return {name: net.count_parameters() for name, net in self.networks.items()}

    def _one_side(self, name, tem, text):
        net = self.networks[name]
        if self.kind is ModelKind.BASELINE:
            return recursive_forecast(net, tem).astype(np.float64)
        return net.predict({"tem": tem, "text": text})[:, :, 0].astype(np.float64)

    def predict_scaled(self, tem_before=None, tem_after=None, text=None, direction="combined", parts=None):
        """Batched prediction on scaled inputs.

        Shapes: ``tem_before`` and ``tem_after`` ``(N, 576)``, ``text``
        ``(N, 1248)`` covering the 6 days before, the gap day and the 6 days
        after. Inputs a direction does not use may be None. Returns ``(N, 96)``.
        If ``parts`` is a dict it receives the onwards/backwards components.
        """
        direction = Direction(direction)
        if direction not in self.directions:
            raise ConfigError(f"{self.kind.value} does not support direction {direction.value}")
        if text is None:
            raise DimensionError("text input is required")
        text = np.asarray(text)
        if text.ndim != 2 or text.shape[1] != TEXT_FULL:
            raise DimensionError(f"text input must be (N, {TEXT_FULL}), got {text.shape}")
        use_before = direction is not Direction.BACKWARDS
        use_after = direction is not Direction.ONWARDS
        for name, arr, used in (("tem_before", tem_before, use_before), ("tem_after", tem_after, use_after)):
            if used and (arr is None or np.ndim(arr) != 2 or np.shape(arr)[1] != CONTEXT):
                got = None if arr is None else np.shape(arr)
                raise DimensionError(f"{name} must be (N, {CONTEXT}), got {got}")
        if self.kind is ModelKind.CNN_BILSTM:
            tem = np.concatenate([tem_before, tem_after], axis=1)
            return self.networks["bilstm"].predict({"tem": tem, "text": text})[:, :, 0].astype(np.float64)
        f = b = None
        if use_before:
            f = self._one_side("onwards", np.asarray(tem_before), text[:, :TEXT_ONE_SIDE])
        if use_after:
            rev_tem = np.ascontiguousarray(np.asarray(tem_after)[:, ::-1])
            rev_text = np.ascontiguousarray(text[:, CONTEXT:][:, ::-1])
            b = self._one_side("backwards", rev_tem, rev_text)[:, ::-1]
        if parts is not None:
            parts["onwards"], parts["backwards"] = f, b
        if direction is Direction.ONWARDS:
            return f
        if direction is Direction.BACKWARDS:
            return b
        if self.kind is ModelKind.CNN_LSTM:
            return combine_sigmoid(f, b)
        return combine_linear(f, b)

    def predict(self, tem_before=None, tem_after=None, text=None, direction="combined", parts=None):
        """Like :meth:`predict_scaled` but in original units on both ends."""
        if self.scaler is None:
            raise UsageError("model has no fitted scaler")
        sc = self.scaler
        tb = None if tem_before is None else sc.tem.transform(tem_before)
        ta = None if tem_after is None else sc.tem.transform(tem_after)
        tx = None if text is None else sc.text.transform(text)
        scaled_parts = {} if parts is not None else None
        out = sc.tem.inverse(self.predict_scaled(tb, ta, tx, direction, scaled_parts))
        if parts is not None:
            for k, v in scaled_parts.items():
                parts[k] = None if v is None else sc.tem.inverse(v)
        return out

    def combination_weights(self, direction="combined"):
        if Direction(direction) is not Direction.COMBINED or self.kind is ModelKind.CNN_BILSTM:
            return None
        return sigmoid_weights(DAY) if self.kind is ModelKind.CNN_LSTM else linear_weights(DAY)

    def save(self, path, extra: dict | None = None) -> Path:
        meta = {"model_kind": self.kind.value, "scaler": self.scaler.to_dict() if self.scaler else None}
        meta.update(extra or {})
        return serialize.save(path, self.networks, meta)

    @classmethod
    def load(cls, path) -> "GapFillModel":
        networks, meta = serialize.load(path)
        scaler = ScalerParams.from_dict(meta["scaler"]) if meta.get("scaler") else None
        model = cls(meta["model_kind"], networks, scaler)
        model.metadata = meta
        return model


def fill_gap(model: GapFillModel, tem_before, tem_after, text_full, direction="combined") -> Prediction:
    """Fill one 96-step day from raw (unscaled) 15-minute context.

    ``tem_before``/``tem_after`` are the 576 TEM values either side of the gap
    (the one a direction does not use may be None) and ``text_full`` the 1248
    TEXT values spanning both contexts and the gap day.
    """
    if model.scaler is None:
        raise UsageError("model has no fitted scaler")
    direction = Direction(direction)
    arrays = {}
    for name, arr in (("tem_before", tem_before), ("tem_after", tem_after), ("text_full", text_full)):
        if arr is None:
            arrays[name] = None
            continue
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError(f"{name} contains gaps or non-finite values")
        arrays[name] = arr[None]
    parts = {}
    values = model.predict(arrays["tem_before"], arrays["tem_after"], arrays["text_full"], direction, parts)[0]
    return Prediction(
        values=values,
        model_kind=model.kind,
        direction=direction,
        weights=model.combination_weights(direction),
        onwards=None if parts.get("onwards") is None else parts["onwards"][0],
        backwards=None if parts.get("backwards") is None else parts["backwards"][0],
    )


class MeanPredictor:
    """Null model: predicts the per-step mean target of a reference set for every gap."""

    kind = "mean"

    def __init__(self, step_means):
        self.step_means = np.asarray(step_means, dtype=np.float64)

    @classmethod
    def fit(cls, targets) -> "MeanPredictor":
        return cls(np.asarray(targets, dtype=np.float64).mean(axis=0))

    def predict(self, tem_before=None, tem_after=None, text=None, direction="combined", parts=None):
        n = len(text)
        return np.tile(self.step_means, (n, 1))
