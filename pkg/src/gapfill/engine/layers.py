"""Layer specs and their numpy forward/backward implementations.

All layers work on batches shaped ``(batch, time_steps, channels)``. A single
sample is therefore the ``(time_steps, channels)`` slice of a batch.

Layers keep the intermediates needed for the backward pass only when the
forward pass runs with ``training=True``. Inference passes never mutate the
layer, so a trained network can be shared between threads.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, UsageError

__all__ = [
    "LayerKind",
    "LayerSpec",
    "Layer",
    "Conv1D",
    "AvgPool1D",
    "LSTM",
    "BiLSTM",
    "Dense",
    "Dropout",
    "ReLU",
    "Flatten",
    "Concat",
    "build_layer",
    "output_shape",
    "parameter_count",
    "count_parameters",
    "sigmoid",
]


class LayerKind(str, enum.Enum):
    CONV1D = "Conv1D"
    AVGPOOL1D = "AvgPool1D"
    LSTM = "LSTM"
    BILSTM = "BiLSTM"
    DENSE = "Dense"
    DROPOUT = "Dropout"
    CONCAT = "Concat"
    RELU = "ReLU"
    FLATTEN = "Flatten"


_PARAMETERIZED = {LayerKind.CONV1D, LayerKind.LSTM, LayerKind.BILSTM, LayerKind.DENSE}


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``units`` is the number of filters for Conv1D and the number of units per
    direction for BiLSTM. ``pool_size`` is only read by AvgPool1D.
    """

    kind: LayerKind
    units: int = 0
    kernel_size: int = 1
    padding: str = "same"
    dropout_rate: float = 0.0
    return_sequences: bool = True
    pool_size: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if self.kind in _PARAMETERIZED and self.units < 1:
            raise ConfigError(f"{self.kind.value} needs units >= 1, got {self.units}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"unknown padding {self.padding!r}")
        if self.kind is LayerKind.CONV1D and self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if self.kind is LayerKind.AVGPOOL1D and self.pool_size != 2:
            raise ConfigError("only pool_size 2 is supported")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def output_shape(spec: LayerSpec, in_shape: tuple[int, int]) -> tuple[int, int]:
    """Per-sample output shape of ``spec`` applied to ``in_shape = (T, C)``."""
    t, c = in_shape
    k = spec.kind
    if k is LayerKind.CONV1D:
        if spec.padding == "same":
            return (t, spec.units)
        if t < spec.kernel_size:
            raise DimensionError(f"valid conv with kernel {spec.kernel_size} on length {t}")
        return (t - spec.kernel_size + 1, spec.units)
    if k is LayerKind.AVGPOOL1D:
        if t % spec.pool_size:
            raise DimensionError(f"pool size {spec.pool_size} does not divide length {t}")
        return (t // spec.pool_size, c)
    if k is LayerKind.LSTM:
        return (t if spec.return_sequences else 1, spec.units)
    if k is LayerKind.BILSTM:
        return (t if spec.return_sequences else 1, 2 * spec.units)
    if k is LayerKind.DENSE:
        return (t, spec.units)
    if k is LayerKind.FLATTEN:
        return (1, t * c)
    if k in (LayerKind.DROPOUT, LayerKind.RELU):
        return (t, c)
    raise DimensionError(f"{k.value} takes several inputs; use the network concat step")


def parameter_count(spec: LayerSpec, in_shape: tuple[int, int]) -> int:
    _, c = in_shape
    n = spec.units
    if spec.kind is LayerKind.CONV1D:
        return spec.kernel_size * c * n + n
    if spec.kind is LayerKind.LSTM:
        return 4 * n * (c + n + 1)
    if spec.kind is LayerKind.BILSTM:
        return 8 * n * (c + n + 1)
    if spec.kind is LayerKind.DENSE:
        return c * n + n
    return 0


def count_parameters(specs, input_shape: tuple[int, int]) -> int:
    """Exact trainable-parameter count of a layer chain fed with ``input_shape``.

    Raises DimensionError when the chain cannot be applied to that shape.
    """
    total = 0
    shape = tuple(input_shape)
    for spec in specs:
        total += parameter_count(spec, shape)
        shape = output_shape(spec, shape)
    return total


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _glorot(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class. Subclasses fill ``params`` and implement the two passes."""

    def __init__(self, spec: LayerSpec, in_shape: tuple[int, int], name: str = ""):
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = output_shape(spec, self.in_shape)
        self.name = name or spec.kind.value
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> None:
        pass

    def _check_input(self, x):
        if x.ndim != 3 or tuple(x.shape[1:]) != self.in_shape:
            raise DimensionError(
                f"{self.name}: expected input (batch, {self.in_shape[0]}, {self.in_shape[1]}), "
                f"got {tuple(x.shape)}"
            )

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _pop_cache(self):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward called without a cached training forward pass")
        cache, self._cache = self._cache, None
        return cache


class Conv1D(Layer):
    """1-D convolution, stride 1. Kernel shape ``(kernel_size, in_channels, filters)``."""

    def init_params(self, rng, dtype=np.float32):
        k, c, f = self.spec.kernel_size, self.in_shape[1], self.spec.units
        self.params = {
            "kernel": _glorot(rng, k * c, k * f, (k, c, f), dtype),
            "bias": np.zeros(f, dtype=dtype),
        }

    def _pads(self):
        k = self.spec.kernel_size
        if self.spec.padding == "valid":
            return 0, 0
        left = (k - 1) // 2
        return left, k - 1 - left

    def _columns(self, x):
        k = self.spec.kernel_size
        left, right = self._pads()
        xp = np.pad(x, ((0, 0), (left, right), (0, 0))) if left or right else x
        t_out = self.out_shape[0]
        return np.stack([xp[:, j : j + t_out] for j in range(k)], axis=2)

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        kernel = self.params["kernel"]
        k, c, f = kernel.shape
        cols = self._columns(x)
        b, t_out = cols.shape[:2]
        y = cols.reshape(b, t_out, k * c) @ kernel.reshape(k * c, f) + self.params["bias"]
        if training:
            self._cache = cols
        return y

    def backward(self, dy):
        cols = self._pop_cache()
        kernel = self.params["kernel"]
        k, c, f = kernel.shape
        b, t_out = dy.shape[:2]
        cols2 = cols.reshape(b * t_out, k * c)
        dy2 = dy.reshape(b * t_out, f)
        self.grads = {
            "kernel": (cols2.T @ dy2).reshape(k, c, f),
            "bias": dy2.sum(axis=0),
        }
        dcols = (dy2 @ kernel.reshape(k * c, f).T).reshape(b, t_out, k, c)
        left, right = self._pads()
        dxp = np.zeros((b, self.in_shape[0] + left + right, c), dtype=dy.dtype)
        for j in range(k):
            dxp[:, j : j + t_out] += dcols[:, :, j]
        return dxp[:, left : left + self.in_shape[0]]


class AvgPool1D(Layer):
    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        p = self.spec.pool_size
        b, t, c = x.shape
        if training:
            self._cache = True
        return x.reshape(b, t // p, p, c).mean(axis=2)

    def backward(self, dy):
        self._pop_cache()
        p = self.spec.pool_size
        return np.repeat(dy / p, p, axis=1)


def lstm_scan(x, kernel, recurrent, bias, keep=False):
    """Run an LSTM over ``x`` of shape (B, T, C).

    Gate blocks along the last axis of ``kernel``/``recurrent``/``bias`` are
    ordered input, forget, output, candidate. Returns the hidden sequence
    (B, T, n) and, when ``keep`` is set, the time-major state needed by
    :func:`lstm_scan_backward`.
    """
    b, t, _ = x.shape
    n = recurrent.shape[0]
    x_tm = np.ascontiguousarray(x.transpose(1, 0, 2))
    # (T, B, 4n) pre-activations, overwritten step by step with the gate values
    acts = x_tm @ kernel
    acts += bias
    h = np.zeros((b, n), dtype=acts.dtype)
    cell = np.zeros((b, n), dtype=acts.dtype)
    hs = np.empty((t, b, n), dtype=acts.dtype)
    cs = np.empty((t, b, n), dtype=acts.dtype) if keep else None
    tcs = np.empty((t, b, n), dtype=acts.dtype) if keep else None
    tmp = np.empty((b, n), dtype=acts.dtype)
    tc_buf = np.empty((b, n), dtype=acts.dtype)
    for s in range(t):
        a = acts[s]
        a += h @ recurrent
        # sigmoid(z) = (1 + tanh(z / 2)) / 2; tanh is the fastest vectorised ufunc here
        sig = a[:, : 3 * n]
        sig *= 0.5
        np.tanh(a, out=a)
        sig *= 0.5
        sig += 0.5
        np.multiply(a[:, n : 2 * n], cell, out=cell)
        np.multiply(a[:, :n], a[:, 3 * n :], out=tmp)
        cell += tmp
        tc = tcs[s] if keep else tc_buf
        np.tanh(cell, out=tc)
        h = hs[s]
        np.multiply(a[:, 2 * n : 3 * n], tc, out=h)
        if keep:
            cs[s] = cell
    out = hs.transpose(1, 0, 2)
    if keep:
        return out, (x_tm, acts, cs, tcs, hs)
    return out, None


def _flush_tiny(a, buf, tiny):
    # gradients decaying through long sequences would otherwise turn subnormal,
    # which slows float arithmetic by orders of magnitude
    np.abs(a, out=buf)
    np.copyto(a, 0, where=buf < tiny)


def lstm_scan_backward(state, kernel, recurrent, dhs):
    """Backpropagation through time for :func:`lstm_scan`.

    ``dhs`` (B, T, n) is the loss gradient w.r.t. every hidden state (zeros
    where the layer output did not use the state). Returns
    ``(dx, dkernel, drecurrent, dbias)``.
    """
    x_tm, acts, cs, tcs, hs = state
    t, b, n = hs.shape
    dtype = hs.dtype
    tiny = np.finfo(dtype).tiny * 2**24
    dhs_tm = np.ascontiguousarray(np.asarray(dhs, dtype=dtype).transpose(1, 0, 2))
    dz_all = np.empty_like(acts)
    dh = np.zeros((b, n), dtype=dtype)
    dc = np.zeros((b, n), dtype=dtype)
    zero = np.zeros((b, n), dtype=dtype)
    buf = np.empty((b, n), dtype=dtype)
    rt = np.ascontiguousarray(recurrent.T)
    for s in range(t - 1, -1, -1):
        a = acts[s]
        i, f, o, g = a[:, :n], a[:, n : 2 * n], a[:, 2 * n : 3 * n], a[:, 3 * n :]
        tc = tcs[s]
        dh += dhs_tm[s]
        dc += dh * o * (1.0 - tc * tc)
        c_prev = cs[s - 1] if s > 0 else zero
        dz = dz_all[s]
        np.multiply(dc * g, i * (1.0 - i), out=dz[:, :n])
        np.multiply(dc * c_prev, f * (1.0 - f), out=dz[:, n : 2 * n])
        np.multiply(dh * tc, o * (1.0 - o), out=dz[:, 2 * n : 3 * n])
        np.multiply(dc * i, 1.0 - g * g, out=dz[:, 3 * n :])
        np.matmul(dz, rt, out=dh)
        dc *= f
        _flush_tiny(dh, buf, tiny)
        _flush_tiny(dc, buf, tiny)
    c_in = x_tm.shape[2]
    dz2 = dz_all.reshape(t * b, 4 * n)
    dkernel = x_tm.reshape(t * b, c_in).T @ dz2
    h_prev = np.concatenate([np.zeros((1, b, n), dtype=dtype), hs[:-1]], axis=0)
    drecurrent = h_prev.reshape(t * b, n).T @ dz2
    dbias = dz2.sum(axis=0)
    dx = (dz_all @ kernel.T).transpose(1, 0, 2)
    return dx, dkernel, drecurrent, dbias


def _lstm_params(rng, c, n, dtype):
    # gate blocks: input, forget, output, candidate
    bias = np.zeros(4 * n, dtype=dtype)
    bias[n : 2 * n] = 1.0
    return {
        "kernel": _glorot(rng, c, 4 * n, (c, 4 * n), dtype),
        "recurrent_kernel": rng.uniform(-0.05, 0.05, size=(n, 4 * n)).astype(dtype),
        "bias": bias,
    }


class LSTM(Layer):
    def init_params(self, rng, dtype=np.float32):
        self.params = _lstm_params(rng, self.in_shape[1], self.spec.units, dtype)

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        p = self.params
        hs, state = lstm_scan(x, p["kernel"], p["recurrent_kernel"], p["bias"], keep=training)
        if training:
            self._cache = state
        return hs if self.spec.return_sequences else hs[:, -1:]

    def backward(self, dy):
        state = self._pop_cache()
        if self.spec.return_sequences:
            dhs = dy
        else:
            t, b, n = state[-1].shape
            dhs = np.zeros((b, t, n), dtype=dy.dtype)
            dhs[:, -1] = dy[:, 0]
        p = self.params
        dx, dk, dr, db = lstm_scan_backward(state, p["kernel"], p["recurrent_kernel"], dhs)
        self.grads = {"kernel": dk, "recurrent_kernel": dr, "bias": db}
        return dx


class BiLSTM(Layer):
    """Two independent LSTMs, one reading the sequence reversed.

    Outputs are concatenated per time step as ``[forward, backward]``, with the
    backward half re-reversed so that step ``t`` of both halves refers to the
    same input position.
    """

    _DIRS = ("forward", "backward")

    def init_params(self, rng, dtype=np.float32):
        c, n = self.in_shape[1], self.spec.units
        self.params = {}
        for d in self._DIRS:
            for key, arr in _lstm_params(rng, c, n, dtype).items():
                self.params[f"{d}_{key}"] = arr

    def _dir(self, d):
        p = self.params
        return p[f"{d}_kernel"], p[f"{d}_recurrent_kernel"], p[f"{d}_bias"]

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        hf, sf = lstm_scan(x, *self._dir("forward"), keep=training)
        hb, sb = lstm_scan(x[:, ::-1], *self._dir("backward"), keep=training)
        if training:
            self._cache = (sf, sb)
        if self.spec.return_sequences:
            return np.concatenate([hf, hb[:, ::-1]], axis=2)
        return np.concatenate([hf[:, -1:], hb[:, -1:]], axis=2)

    def backward(self, dy):
        sf, sb = self._pop_cache()
        n = self.spec.units
        if self.spec.return_sequences:
            dhf = dy[:, :, :n]
            dhb = dy[:, ::-1, n:]
        else:
            t, b, _ = sf[-1].shape
            dhf = np.zeros((b, t, n), dtype=dy.dtype)
            dhb = np.zeros((b, t, n), dtype=dy.dtype)
            dhf[:, -1] = dy[:, 0, :n]
            dhb[:, -1] = dy[:, 0, n:]
        kf, rf, _ = self._dir("forward")
        kb, rb, _ = self._dir("backward")
        dxf, dkf, drf, dbf = lstm_scan_backward(sf, kf, rf, dhf)
        dxb, dkb, drb, dbb = lstm_scan_backward(sb, kb, rb, dhb)
        self.grads = {
            "forward_kernel": dkf,
            "forward_recurrent_kernel": drf,
            "forward_bias": dbf,
            "backward_kernel": dkb,
            "backward_recurrent_kernel": drb,
            "backward_bias": dbb,
        }
        return dxf + dxb[:, ::-1]


class Dense(Layer):
    """Fully connected layer applied independently at every time step."""

    def init_params(self, rng, dtype=np.float32):
        c, n = self.in_shape[1], self.spec.units
        self.params = {
            "kernel": _glorot(rng, c, n, (c, n), dtype),
            "bias": np.zeros(n, dtype=dtype),
        }

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        if training:
            self._cache = x
        return x @ self.params["kernel"] + self.params["bias"]

    def backward(self, dy):
        x = self._pop_cache()
        c, n = self.params["kernel"].shape
        x2 = x.reshape(-1, c)
        dy2 = dy.reshape(-1, n)
        self.grads = {"kernel": x2.T @ dy2, "bias": dy2.sum(axis=0)}
        return dy @ self.params["kernel"].T


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        rate = self.spec.dropout_rate
        if not training:
            return x
        if rate == 0.0:
            self._cache = np.ones((), dtype=x.dtype)
            return x
        if rng is None:
            raise UsageError(f"{self.name}: training forward pass needs an rng")
        keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
        self._cache = keep
        return x * keep

    def backward(self, dy):
        return dy * self._pop_cache()


class ReLU(Layer):
    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        if training:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._pop_cache()


class Flatten(Layer):
    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        if training:
            self._cache = True
        return x.reshape(x.shape[0], 1, -1)

    def backward(self, dy):
        self._pop_cache()
        return dy.reshape((dy.shape[0],) + self.in_shape)


class Concat:
    """Joins several ``(B, T_k, C)`` tensors along the time axis."""

    def __init__(self, in_shapes, name="concat"):
        chans = {s[1] for s in in_shapes}
        if len(chans) != 1:
            raise DimensionError(f"concat along time needs equal channel counts, got {list(in_shapes)}")
        self.spec = LayerSpec(LayerKind.CONCAT)
        self.in_shapes = [tuple(s) for s in in_shapes]
        self.out_shape = (sum(s[0] for s in in_shapes), chans.pop())
        self.name = name
        self.params = {}
        self.grads = {}

    def forward(self, xs):
        return np.concatenate(xs, axis=1)

    def backward(self, dy):
        bounds = np.cumsum([s[0] for s in self.in_shapes])[:-1]
        return np.split(dy, bounds, axis=1)


_LAYER_CLASSES = {
    LayerKind.CONV1D: Conv1D,
    LayerKind.AVGPOOL1D: AvgPool1D,
    LayerKind.LSTM: LSTM,
    LayerKind.BILSTM: BiLSTM,
    LayerKind.DENSE: Dense,
    LayerKind.DROPOUT: Dropout,
    LayerKind.RELU: ReLU,
    LayerKind.FLATTEN: Flatten,
}


def build_layer(spec: LayerSpec, in_shape, name="") -> Layer:
    try:
        cls = _LAYER_CLASSES[spec.kind]
    except KeyError:
        raise ConfigError(f"{spec.kind.value} cannot be built as a single-input layer") from None
    return cls(spec, in_shape, name)
