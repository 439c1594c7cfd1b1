"""Dense numpy layers with hand-written gradients, the Adam optimizer and a
binary model container. Just enough machinery to train the gap-filling networks."""

from .layers import (
    LayerKind,
    LayerSpec,
    build_layer,
    count_parameters,
    output_shape,
    parameter_count,
)
from .network import Branch, Network, NetworkSpec, NetworkWeights
from .optim import Adam
from . import serialize

__all__ = [
    "Adam",
    "Branch",
    "LayerKind",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "NetworkWeights",
    "build_layer",
    "count_parameters",
    "output_shape",
    "parameter_count",
    "serialize",
]
