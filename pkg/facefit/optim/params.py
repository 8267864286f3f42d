"""Per-image unknowns x and their gradients, organised in named blocks"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from facefit.exceptions import DimensionError
from facefit.model.corrective import AffineLayer
from facefit.render.camera import Pose
from facefit.render.lighting import SH_COUNT

BLOCKS = ("alpha", "beta", "delta_g", "delta_r", "omega", "t", "gamma_b", "gamma_f")
BASE_BLOCKS = ("alpha", "beta", "omega", "t", "gamma_b")
THETA_BLOCKS = ("theta_g", "theta_r")


def block_shapes(model) -> Dict[str, tuple]:
    base = model.base
    c = model.corrective_dim
    return {
        "alpha": (base.geometry_dim,),
        "beta": (base.m_r,),
        "delta_g": (c,),
        "delta_r": (c,),
        "omega": (3,),
        "t": (3,),
        "gamma_b": (SH_COUNT, 3),
        "gamma_f": (SH_COUNT, 3),
    }


@dataclass(eq=False)
class _Blocks:
    alpha: np.ndarray
    beta: np.ndarray
    delta_g: np.ndarray
    delta_r: np.ndarray
    omega: np.ndarray
    t: np.ndarray
    gamma_b: np.ndarray
    gamma_f: np.ndarray

    def __post_init__(self):
        for name in BLOCKS:
            setattr(self, name, np.array(getattr(self, name), dtype=float))

    @classmethod
    def zeros(cls, model, **extra):
        return cls(**{name: np.zeros(shape) for name, shape in block_shapes(model).items()}, **extra)

    def block(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def blocks(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BLOCKS}

    @property
    def dimension(self) -> int:
        return sum(getattr(self, name).size for name in BLOCKS)

    def flatten(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).ravel() for name in BLOCKS])

    def validate(self, model) -> None:
        for name, shape in block_shapes(model).items():
            value = getattr(self, name)
            if value.shape != shape:
                raise DimensionError(f"{name} has shape {value.shape}, model expects {shape}")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, name))) for name in BLOCKS)


@dataclass(eq=False)
class ParamVector(_Blocks):
    """x = (alpha, beta, delta_g, delta_r, omega, t, gamma_b, gamma_f)"""

    @property
    def pose(self) -> Pose:
        return Pose(self.omega, self.t)

    def copy(self) -> "ParamVector":
        return ParamVector(**{name: getattr(self, name).copy() for name in BLOCKS})

    @classmethod
    def unflatten(cls, model, vector: np.ndarray) -> "ParamVector":
        vector = np.asarray(vector, dtype=float)
        shapes = block_shapes(model)
        total = sum(int(np.prod(s)) for s in shapes.values())
        if vector.shape != (total,):
            raise DimensionError(f"flat parameter vector has length {vector.size}, model expects {total}")
        values, offset = {}, 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            values[name] = vector[offset:offset + size].reshape(shape)
            offset += size
        return cls(**values)

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in BLOCKS}

    @classmethod
    def from_dict(cls, data: dict) -> "ParamVector":
        missing = [name for name in BLOCKS if name not in data]
        if missing:
            raise DimensionError(f"parameter record lacks {', '.join(missing)}")
        values = {name: np.asarray(data[name], dtype=float) for name in BLOCKS}
        for name in ("gamma_b", "gamma_f"):
            values[name] = values[name].reshape(SH_COUNT, 3)
        return cls(**values)


@dataclass(eq=False)
class GradientVector(_Blocks):
    """Same layout as ParamVector plus optional corrective-layer gradients"""
    theta_g: Optional[List[AffineLayer]] = None
    theta_r: Optional[List[AffineLayer]] = None

    def copy(self) -> "GradientVector":
        def layers(value):
            return None if value is None else [layer.copy() for layer in value]
        return GradientVector(**{name: getattr(self, name).copy() for name in BLOCKS},
                              theta_g=layers(self.theta_g), theta_r=layers(self.theta_r))

    def is_finite(self) -> bool:
        if not super().is_finite():
            return False
        for layers in (self.theta_g, self.theta_r):
            for layer in layers or ():
                if not (np.all(np.isfinite(layer.matrix)) and np.all(np.isfinite(layer.bias))):
                    return False
        return True

    def non_finite_blocks(self) -> List[str]:
        bad = [name for name in BLOCKS if not np.all(np.isfinite(getattr(self, name)))]
        for name in THETA_BLOCKS:
            for layer in getattr(self, name) or ():
                if not (np.all(np.isfinite(layer.matrix)) and np.all(np.isfinite(layer.bias))):
                    bad.append(name)
                    break
        return bad

    def norm(self) -> float:
        total = float(np.sum(self.flatten() ** 2))
        for name in THETA_BLOCKS:
            for layer in getattr(self, name) or ():
                total += float(np.sum(layer.matrix ** 2) + np.sum(layer.bias ** 2))
        return float(np.sqrt(total))


def sum_layer_grads(grads: List[List[AffineLayer]], scale: float = 1.0) -> List[AffineLayer]:
    """Ordered sum of per-image layer gradients"""
    total = [AffineLayer(layer.matrix.copy(), layer.bias.copy()) for layer in grads[0]]
    for layers in grads[1:]:
        for acc, layer in zip(total, layers):
            acc.matrix += layer.matrix
            acc.bias += layer.bias
    for acc in total:
        acc.matrix *= scale
        acc.bias *= scale
    return total
