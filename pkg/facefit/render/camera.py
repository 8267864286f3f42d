"""Rigid pose, axis-angle rotation and perspective projection"""

from dataclasses import dataclass

import numpy as np

from facefit.exceptions import InvalidModelError

# Points with camera-space depth at or below this are behind the camera
EPS_Z = 1e-6
# Default focal length as a multiple of the image width
FOCAL_SCALE = 1.2
# Below this angle the rotation derivative uses the generator form
_SMALL_ANGLE = 1e-8


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not self.focal_px > 0:
            raise InvalidModelError("focal length must be positive")
        if self.width < 2 or self.height < 2:
            raise InvalidModelError("image must be at least 2x2 pixels")
        if not (0 <= self.cx <= self.width - 1 and 0 <= self.cy <= self.height - 1):
            raise InvalidModelError("principal point must lie inside the image")

    @classmethod
    def default_for(cls, width: int, height: int, focal_scale: float = FOCAL_SCALE) -> "CameraIntrinsics":
        """Pixel centres sit at integer coordinates, so the image centre is ((w-1)/2, (h-1)/2)"""
        return cls(focal_scale * width, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def to_dict(self) -> dict:
        return {"focal_px": self.focal_px, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        return cls(float(data["focal_px"]), float(data["cx"]), float(data["cy"]),
                   int(data["width"]), int(data["height"]))


@dataclass(frozen=True)
class Pose:
    omega: np.ndarray
    t: np.ndarray

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.zeros(3))

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.omega)


def skew(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def rotation_matrix(omega) -> np.ndarray:
    """Exponential map (Rodrigues) of an axis-angle vector"""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    K = skew(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta ** 2) * K @ K


def rotation_derivatives(omega) -> np.ndarray:
    """dR/domega_k for k = 0..2, shape (3, 3, 3)"""
    omega = np.asarray(omega, dtype=float)
    theta2 = float(omega @ omega)
    generators = np.stack([skew(e) for e in np.eye(3)])
    if theta2 < _SMALL_ANGLE ** 2:
        return generators
    R = rotation_matrix(omega)
    W = skew(omega)
    I_minus_R = np.eye(3) - R
    return np.stack([(omega[k] * W + skew(np.cross(omega, I_minus_R[:, k]))) @ R / theta2
                     for k in range(3)])


def rigid_transform(v, pose: Pose) -> np.ndarray:
    """v_hat = R(omega) v + t for a point (3,) or points (N, 3)"""
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(pose.omega)) and np.all(np.isfinite(pose.t))):
        raise ValueError("rigid_transform received non-finite input")
    return v @ pose.rotation.T + pose.t


def project(v_hat, K: CameraIntrinsics) -> np.ndarray:
    """
    Perspective projection of camera-space points (camera looks down +z).

    Points with depth <= EPS_Z project to NaN; visibility treats them as hidden.
    """
    v_hat = np.asarray(v_hat, dtype=float)
    z = v_hat[..., 2]
    in_front = z > EPS_Z
    safe_z = np.where(in_front, z, 1.0)
    pixels = np.stack([K.focal_px * v_hat[..., 0] / safe_z + K.cx,
                       K.focal_px * v_hat[..., 1] / safe_z + K.cy], axis=-1)
    return np.where(in_front[..., None], pixels, np.nan)
