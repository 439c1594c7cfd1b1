"""Multi-branch feed-forward networks assembled from :mod:`gapfill.engine.layers`."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError, UsageError
from .layers import Concat, LayerKind, LayerSpec, build_layer, output_shape, parameter_count

__all__ = ["Branch", "NetworkSpec", "NetworkWeights", "Network"]


@dataclass(frozen=True)
class Branch:
    """A named input and the layer chain applied to it."""

    name: str
    input_shape: tuple[int, int]
    layers: tuple[LayerSpec, ...] = ()


@dataclass(frozen=True)
class NetworkSpec:
    """Branches run in parallel; their outputs are concatenated along time when
    there is more than one (``head`` must then start with a Concat spec), and
    the result goes through the ``head`` chain. The final per-sample output is
    reshaped to ``output_shape``.
    """

    branches: tuple[Branch, ...]
    head: tuple[LayerSpec, ...]
    output_shape: tuple[int, int]

    def layer_table(self) -> list[tuple[str, LayerSpec, tuple[int, int], int]]:
        """Rows ``(name, spec, output_shape, parameters)`` in declaration order."""
        rows = []
        ends = []
        for br in self.branches:
            shape = tuple(br.input_shape)
            for i, spec in enumerate(br.layers):
                pc = parameter_count(spec, shape)
                shape = output_shape(spec, shape)
                rows.append((f"{br.name}/{i}", spec, shape, pc))
            ends.append(shape)
        head = list(self.head)
        if len(ends) > 1:
            if not head or head[0].kind is not LayerKind.CONCAT:
                raise ConfigError("multi-branch networks must start their head with Concat")
            shape = Concat(ends).out_shape
            rows.append(("head/0", head[0], shape, 0))
            start = 1
        else:
            shape = ends[0]
            start = 0
        for i, spec in enumerate(head[start:], start=start):
            pc = parameter_count(spec, shape)
            shape = output_shape(spec, shape)
            rows.append((f"head/{i}", spec, shape, pc))
        if shape[0] * shape[1] != self.output_shape[0] * self.output_shape[1]:
            raise DimensionError(f"network ends in {shape}, cannot reshape to {self.output_shape}")
        return rows

    def count_parameters(self) -> int:
        return sum(r[3] for r in self.layer_table())

    def to_dict(self) -> dict:
        return {
            "branches": [
                {"name": b.name, "input_shape": list(b.input_shape), "layers": [s.to_dict() for s in b.layers]}
                for b in self.branches
            ],
            "head": [s.to_dict() for s in self.head],
            "output_shape": list(self.output_shape),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        branches = tuple(
            Branch(b["name"], tuple(b["input_shape"]), tuple(LayerSpec.from_dict(s) for s in b["layers"]))
            for b in d["branches"]
        )
        head = tuple(LayerSpec.from_dict(s) for s in d["head"])
        return cls(branches, head, tuple(d["output_shape"]))


@dataclass
class NetworkWeights:
    """Every trainable array of a network, keyed ``"<layer>/<param>"`` in declaration order."""

    arrays: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    rng_seed: int = 0

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(OrderedDict((k, v.copy()) for k, v in self.arrays.items()), self.rng_seed)


class Network:
    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        spec.layer_table()  # validates the chain
        rng = np.random.default_rng(self.seed)
        self.branches: list[tuple[str, list]] = []
        ends = []
        for br in spec.branches:
            shape = tuple(br.input_shape)
            layers = []
            for i, ls in enumerate(br.layers):
                layer = build_layer(ls, shape, name=f"{br.name}/{i}")
                layer.init_params(rng, dtype)
                layers.append(layer)
                shape = layer.out_shape
            self.branches.append((br.name, layers))
            ends.append(shape)
        self.concat = None
        head_specs = list(spec.head)
        start = 0
        if len(ends) > 1:
            self.concat = Concat(ends, name="head/0")
            shape = self.concat.out_shape
            start = 1
        else:
            shape = ends[0]
        self.head = []
        for i, ls in enumerate(head_specs[start:], start=start):
            layer = build_layer(ls, shape, name=f"head/{i}")
            layer.init_params(rng, dtype)
            self.head.append(layer)
            shape = layer.out_shape
        self._final_shape = shape
        self._trained_forward = False

    @property
    def input_names(self) -> list[str]:
        return [b.name for b in self.spec.branches]

    def layers(self):
        for _, chain in self.branches:
            yield from chain
        yield from self.head

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for layer in self.layers():
            for k, v in layer.params.items():
                out[f"{layer.name}/{k}"] = v
        return out

    def gradients(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for layer in self.layers():
            for k in layer.params:
                out[f"{layer.name}/{k}"] = layer.grads[k]
        return out

    def count_parameters(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))

    def get_weights(self) -> NetworkWeights:
        return NetworkWeights(OrderedDict((k, v.copy()) for k, v in self.parameters().items()), self.seed)

    def set_weights(self, weights: NetworkWeights) -> None:
        params = self.parameters()
        if list(params) != list(weights.arrays):
            raise DimensionError("weight keys do not match the network layout")
        for k, v in weights.arrays.items():
            if params[k].shape != v.shape:
                raise DimensionError(f"{k}: expected shape {params[k].shape}, got {v.shape}")
        for layer in self.layers():
            for k in layer.params:
                layer.params[k] = weights.arrays[f"{layer.name}/{k}"].astype(layer.params[k].dtype, copy=True)

    def astype(self, dtype) -> "Network":
        """Copy of this network with every parameter cast to ``dtype``."""
        net = Network(self.spec, self.seed, dtype=dtype)
        net.set_weights(self.get_weights())
        return net

    def _as_inputs(self, inputs):
        if isinstance(inputs, np.ndarray):
            inputs = [inputs]
        if isinstance(inputs, dict):
            missing = [n for n in self.input_names if n not in inputs]
            if missing:
                raise DimensionError(f"missing network inputs {missing}")
            inputs = [inputs[n] for n in self.input_names]
        if len(inputs) != len(self.branches):
            raise DimensionError(f"network takes {len(self.branches)} inputs, got {len(inputs)}")
        out = []
        for x, br in zip(inputs, self.spec.branches):
            x = np.asarray(x)
            if x.ndim == 2:
                x = x[:, :, None]
            if tuple(x.shape[1:]) != tuple(br.input_shape):
                raise DimensionError(
                    f"input {br.name!r}: expected per-sample shape {tuple(br.input_shape)}, got {tuple(x.shape[1:])}"
                )
            out.append(x)
        return out

    def forward(self, inputs, training=False, rng=None, intermediates=None):
        """Batched forward pass.

        ``inputs`` is a dict keyed by branch name, a sequence in branch order,
        or a single array for one-branch networks; 2-D arrays are treated as
        single-channel. Returns ``(batch,) + output_shape``. When a dict is
        passed as ``intermediates`` it is filled with every layer's output.
        """
        xs = self._as_inputs(inputs)
        dtype = self.dtype
        outs = []
        for x, (_, chain) in zip(xs, self.branches):
            x = x.astype(dtype, copy=False)
            for layer in chain:
                x = layer.forward(x, training=training, rng=rng)
                if intermediates is not None:
                    intermediates[layer.name] = x
            outs.append(x)
        if self.concat is not None:
            x = self.concat.forward(outs)
            if intermediates is not None:
                intermediates[self.concat.name] = x
        else:
            x = outs[0]
        for layer in self.head:
            x = layer.forward(x, training=training, rng=rng)
            if intermediates is not None:
                intermediates[layer.name] = x
        if training:
            self._trained_forward = True
        return x.reshape((x.shape[0],) + tuple(self.spec.output_shape))

    def predict(self, inputs, batch_size: int = 256) -> np.ndarray:
        """Inference forward pass in chunks of ``batch_size`` samples."""
        xs = self._as_inputs(inputs)
        n = xs[0].shape[0]
        if n == 0:
            return np.empty((0,) + tuple(self.spec.output_shape), dtype=self.dtype)
        parts = [self.forward([x[i : i + batch_size] for x in xs]) for i in range(0, n, batch_size)]
        return np.concatenate(parts, axis=0)

    def backward(self, dy) -> "OrderedDict[str, np.ndarray]":
        """Backpropagate ``dy`` (shape of the last forward output) through the
        cached training pass and return the parameter gradients."""
        if not self._trained_forward:
            raise UsageError("backward needs a preceding forward pass with training=True")
        self._trained_forward = False
        dy = np.asarray(dy).reshape((dy.shape[0],) + self._final_shape)
        for layer in reversed(self.head):
            dy = layer.backward(dy)
        douts = self.concat.backward(dy) if self.concat is not None else [dy]
        for d, (_, chain) in zip(douts, self.branches):
            for layer in reversed(chain):
                d = layer.backward(d)
        return self.gradients()
