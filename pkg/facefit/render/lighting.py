"""Second-order spherical-harmonics illumination of Lambertian reflectance"""

from dataclasses import dataclass

import numpy as np

SH_BANDS = 3
SH_COUNT = SH_BANDS * SH_BANDS

# Real SH normalisation constants
SH_C0 = 0.28209479177387814      # 1 / (2 sqrt(pi))
SH_C1 = 0.4886025119029199       # sqrt(3 / (4 pi))
SH_C2 = 1.0925484305920792       # sqrt(15 / pi) / 2
SH_C3 = 0.31539156525252005      # sqrt(5 / pi) / 4
SH_C4 = 0.5462742152960396       # sqrt(15 / pi) / 4

_UNIT_TOLERANCE = 1e-9


@dataclass
class Illumination:
    """Nine SH coefficients per RGB channel, shape (9, 3)"""
    gamma: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.shape != (SH_COUNT, 3):
            raise ValueError(f"illumination needs shape ({SH_COUNT}, 3), got {self.gamma.shape}")
        if not np.all(np.isfinite(self.gamma)):
            raise ValueError("illumination coefficients must be finite")

    @classmethod
    def ambient(cls, level: float) -> "Illumination":
        gamma = np.zeros((SH_COUNT, 3))
        gamma[0] = level
        return cls(gamma)


def _as_gamma(gamma) -> np.ndarray:
    return gamma.gamma if isinstance(gamma, Illumination) else np.asarray(gamma, dtype=float)


def sh_values(n: np.ndarray) -> np.ndarray:
    """Bands 0-2 in order (Y00; Y1-1, Y10, Y11; Y2-2 .. Y22) without the unit check"""
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack([
        np.full_like(x, SH_C0),
        SH_C1 * y,
        SH_C1 * z,
        SH_C1 * x,
        SH_C2 * x * y,
        SH_C2 * y * z,
        SH_C3 * (3.0 * z * z - 1.0),
        SH_C2 * x * z,
        SH_C4 * (x * x - y * y),
    ], axis=-1)


def sh_basis(n) -> np.ndarray:
    """Real spherical harmonics of a unit normal (or an array of them)"""
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > _UNIT_TOLERANCE):
        raise ValueError("sh_basis requires unit-length normals")
    return sh_values(n)


def sh_jacobian(n: np.ndarray) -> np.ndarray:
    """d sh_values / d n, shape (..., 9, 3)"""
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    zero = np.zeros_like(x)
    c1 = np.full_like(x, SH_C1)
    rows = [
        (zero, zero, zero),
        (zero, c1, zero),
        (zero, zero, c1),
        (c1, zero, zero),
        (SH_C2 * y, SH_C2 * x, zero),
        (zero, SH_C2 * z, SH_C2 * y),
        (zero, zero, 6.0 * SH_C3 * z),
        (SH_C2 * z, zero, SH_C2 * x),
        (2.0 * SH_C4 * x, -2.0 * SH_C4 * y, zero),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def irradiance(n, gamma) -> np.ndarray:
    """sum_b gamma_b H_b(n) per channel"""
    return sh_basis(n) @ _as_gamma(gamma)


def shade(r, n, gamma) -> np.ndarray:
    """c = r (Hadamard) sum_b gamma_b H_b(n)"""
    return np.asarray(r, dtype=float) * irradiance(n, gamma)
