"""Trainable corrective mappings F(delta | Theta) from C codes to 3N offsets"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from facefit.exceptions import DimensionError, InvalidModelError

INIT_SCALE = 1e-3


class CorrectiveVariant(Enum):
    LINEAR = "linear"
    ONE_NL = "onenl"
    TWO_NL = "twonl"

    @property
    def layer_count(self) -> int:
        return {"linear": 1, "onenl": 2, "twonl": 3}[self.value]


@dataclass(eq=False)
class AffineLayer:
    matrix: np.ndarray
    bias: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrix.shape[0]

    def copy(self) -> "AffineLayer":
        return AffineLayer(self.matrix.copy(), self.bias.copy())


@dataclass
class CorrectiveCache:
    """Layer inputs and pre-activations of one forward pass"""
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


@dataclass(eq=False)
class CorrectiveMap:
    variant: CorrectiveVariant
    layers: List[AffineLayer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def enabled(self) -> bool:
        """A zero-dimensional code space disables the corrective level"""
        return self.input_dim > 0

    @property
    def parameter_count(self) -> int:
        return sum(layer.matrix.size + layer.bias.size for layer in self.layers)

    @classmethod
    def initialize(cls, variant: CorrectiveVariant, input_dim: int, output_dim: int,
                   rng: np.random.Generator, hidden_dim: Optional[int] = None,
                   scale: float = INIT_SCALE) -> "CorrectiveMap":
        """Zero biases, small random matrices: the final level starts at the base level"""
        hidden = input_dim if hidden_dim is None else hidden_dim
        dims = [input_dim] + [hidden] * (variant.layer_count - 1) + [output_dim]
        layers = [AffineLayer(scale * rng.standard_normal((dims[i + 1], dims[i])), np.zeros(dims[i + 1]))
                  for i in range(variant.layer_count)]
        return cls(variant, layers)

    def copy(self) -> "CorrectiveMap":
        return CorrectiveMap(self.variant, [layer.copy() for layer in self.layers])

    def validate(self, output_dim: Optional[int] = None) -> None:
        if len(self.layers) != self.variant.layer_count:
            raise InvalidModelError(f"{self.variant.value} corrective needs {self.variant.layer_count} layers, "
                                    f"got {len(self.layers)}")
        for i, layer in enumerate(self.layers):
            if layer.bias.shape != (layer.output_dim,):
                raise InvalidModelError(f"layer {i} bias does not match its matrix")
            if i > 0 and layer.input_dim != self.layers[i - 1].output_dim:
                raise InvalidModelError(f"layer {i} input does not chain with layer {i - 1}")
            if not (np.all(np.isfinite(layer.matrix)) and np.all(np.isfinite(layer.bias))):
                raise InvalidModelError(f"layer {i} contains non-finite values")
        if output_dim is not None and self.output_dim != output_dim:
            raise InvalidModelError(f"corrective output is {self.output_dim}, model needs {output_dim}")

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def forward(self, delta: np.ndarray) -> Tuple[np.ndarray, CorrectiveCache]:
        cache = CorrectiveCache()
        h = delta
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cache.inputs.append(h)
            z = layer.matrix @ h + layer.bias
            if i < last:
                cache.pre_activations.append(z)
                h = np.maximum(z, 0.0)
            else:
                h = z
        return h, cache

    def backward(self, cache: CorrectiveCache, grad_output: np.ndarray,
                 with_layers: bool = False) -> Tuple[np.ndarray, Optional[List[AffineLayer]]]:
        """Vector-Jacobian product; ReLU subgradient at exactly 0 is 0"""
        layer_grads = [] if with_layers else None
        g = grad_output
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if with_layers:
                layer_grads.append(AffineLayer(np.outer(g, cache.inputs[i]), g.copy()))
            g = layer.matrix.T @ g
            if i > 0:
                g = g * (cache.pre_activations[i - 1] > 0.0)
        if with_layers:
            layer_grads.reverse()
        return g, layer_grads


def eval_corrective(corrective: CorrectiveMap, delta) -> np.ndarray:
    """F(delta) for the map's variant"""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (corrective.input_dim,):
        raise DimensionError(f"delta has shape {delta.shape}, expected ({corrective.input_dim},)")
    corrective.validate()
    out, _ = corrective.forward(delta)
    return out
