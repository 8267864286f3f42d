"""Affine base model: mean plus basis for geometry and reflectance"""

from dataclasses import dataclass

import numpy as np

from facefit.exceptions import DimensionError, InvalidModelError


@dataclass(eq=False)
class BaseModel:
    """
    Two affine models over 3N per-vertex values (x0, y0, z0, x1, ...).

    Geometry columns are shape modes followed by expression modes; the
    expression columns carry no further meaning than extra geometry.
    """
    a_g: np.ndarray
    a_r: np.ndarray
    B_g: np.ndarray
    B_r: np.ndarray
    sigma_g: np.ndarray
    sigma_r: np.ndarray
    m_s: int
    m_e: int
    m_r: int

    @property
    def vertex_count(self) -> int:
        return len(self.a_g) // 3

    @property
    def geometry_dim(self) -> int:
        return self.m_s + self.m_e

    def validate(self) -> None:
        n3 = len(self.a_g)
        if n3 % 3 != 0 or len(self.a_r) != n3:
            raise InvalidModelError("mean vectors must both have length 3N")
        if self.B_g.shape != (n3, self.m_s + self.m_e):
            raise InvalidModelError(f"B_g has shape {self.B_g.shape}, expected {(n3, self.m_s + self.m_e)}")
        if self.B_r.shape != (n3, self.m_r):
            raise InvalidModelError(f"B_r has shape {self.B_r.shape}, expected {(n3, self.m_r)}")
        if self.sigma_g.shape != (self.m_s + self.m_e,) or self.sigma_r.shape != (self.m_r,):
            raise InvalidModelError("sigma length does not match the declared dimensions")
        if np.any(self.sigma_g <= 0) or np.any(self.sigma_r <= 0):
            raise InvalidModelError("standard deviations must be strictly positive")
        for name in ("a_g", "a_r", "B_g", "B_r", "sigma_g", "sigma_r"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidModelError(f"{name} contains non-finite values")


def _check_coefficients(coefficients, expected: int, name: str) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (expected,):
        raise DimensionError(f"{name} has shape {coefficients.shape}, expected ({expected},)")
    if not np.all(np.isfinite(coefficients)):
        raise DimensionError(f"{name} contains non-finite values")
    return coefficients


def eval_base_geometry(base: BaseModel, alpha) -> np.ndarray:
    """v^b = a_g + sum_k alpha_k b_k^g"""
    alpha = _check_coefficients(alpha, base.geometry_dim, "alpha")
    return base.a_g + base.B_g @ alpha


def eval_base_reflectance(base: BaseModel, beta) -> np.ndarray:
    """r^b = a_r + sum_k beta_k b_k^r"""
    beta = _check_coefficients(beta, base.m_r, "beta")
    return base.a_r + base.B_r @ beta
