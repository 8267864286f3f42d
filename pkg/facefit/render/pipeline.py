"""Point-based image formation per level and its backward pass"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from facefit.model.base_model import eval_base_geometry, eval_base_reflectance
from facefit.model.multilevel import MultiLevelModel, eval_final
from facefit.model.topology import MeshTopology
from facefit.render.camera import EPS_Z, CameraIntrinsics, Pose, project, rotation_derivatives, rotation_matrix
from facefit.render.lighting import sh_jacobian, sh_values
from facefit.render.normals import NormalField, normals_vjp, vertex_normals


class Level(str, Enum):
    BASE = "base"
    FINAL = "final"


@dataclass(eq=False)
class RenderState:
    level: Level
    model_vertices: np.ndarray
    reflectance: np.ndarray
    pose: Pose
    rotation: np.ndarray
    camera_vertices: np.ndarray
    normal_field: NormalField
    pixels: np.ndarray
    gamma: np.ndarray
    sh: np.ndarray
    irradiance: np.ndarray
    colors: np.ndarray
    visible: np.ndarray

    @property
    def camera_normals(self) -> np.ndarray:
        return self.normal_field.normals

    @property
    def visible_indices(self) -> np.ndarray:
        return np.flatnonzero(self.visible)

    @property
    def vertex_count(self) -> int:
        return len(self.model_vertices)


class FormationGradient(NamedTuple):
    vertices: np.ndarray      # (N, 3) model space
    reflectance: np.ndarray   # (N, 3)
    gamma: np.ndarray         # (9, 3)
    omega: np.ndarray         # (3,)
    t: np.ndarray             # (3,)


def visibility(camera_normals: np.ndarray, camera_vertices: np.ndarray, pixels: np.ndarray,
               K: CameraIntrinsics) -> np.ndarray:
    """Backface culling: normal faces the camera, point in front, projection inside the image"""
    facing = np.einsum("ij,ij->i", camera_normals, camera_vertices) < 0.0
    in_front = camera_vertices[:, 2] > EPS_Z
    with np.errstate(invalid="ignore"):
        inside = (np.isfinite(pixels).all(axis=1)
                  & (pixels[:, 0] >= 0.0) & (pixels[:, 0] <= K.width - 1.0)
                  & (pixels[:, 1] >= 0.0) & (pixels[:, 1] <= K.height - 1.0))
    return facing & in_front & inside


def render_geometry(vertices: np.ndarray, reflectance: np.ndarray, pose: Pose, gamma: np.ndarray,
                    topology: MeshTopology, K: CameraIntrinsics, level: Level = Level.BASE) -> RenderState:
    """Camera transform, normals, projection, visibility and SH shading of per-vertex data"""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    reflectance = np.asarray(reflectance, dtype=float).reshape(-1, 3)
    gamma = np.asarray(gamma, dtype=float)
    rotation = rotation_matrix(pose.omega)
    camera_vertices = vertices @ rotation.T + pose.t
    field = vertex_normals(camera_vertices, topology)
    pixels = project(camera_vertices, K)
    sh = sh_values(field.normals)
    irradiance = sh @ gamma
    colors = reflectance * irradiance
    visible = visibility(field.normals, camera_vertices, pixels, K)
    return RenderState(level=Level(level), model_vertices=vertices, reflectance=reflectance, pose=pose,
                       rotation=rotation, camera_vertices=camera_vertices, normal_field=field, pixels=pixels,
                       gamma=gamma, sh=sh, irradiance=irradiance, colors=colors, visible=visible)


def render_state(model: MultiLevelModel, params, K: CameraIntrinsics, level: Level) -> RenderState:
    """Evaluate the model at one level and form its point-based rendering"""
    level = Level(level)
    if level is Level.BASE:
        vertices = eval_base_geometry(model.base, params.alpha)
        reflectance = eval_base_reflectance(model.base, params.beta)
        gamma = params.gamma_b
    else:
        vertices, reflectance = eval_final(model, params.alpha, params.beta, params.delta_g, params.delta_r)
        gamma = params.gamma_f
    return render_geometry(vertices, reflectance, params.pose, gamma, model.topology, K, level)


def backprop_formation(state: RenderState, topology: MeshTopology, K: CameraIntrinsics,
                       grad_pixels: Optional[np.ndarray], grad_colors: Optional[np.ndarray]) -> FormationGradient:
    """Chain rule from pixel positions and shaded colours back to model-space inputs"""
    n = state.vertex_count
    grad_camera = np.zeros((n, 3))
    grad_reflectance = np.zeros((n, 3))
    grad_gamma = np.zeros_like(state.gamma)

    if grad_colors is not None:
        grad_reflectance = grad_colors * state.irradiance
        grad_irradiance = grad_colors * state.reflectance
        grad_gamma = state.sh.T @ grad_irradiance
        grad_sh = grad_irradiance @ state.gamma.T
        grad_normals = np.einsum("nk,nkj->nj", grad_sh, sh_jacobian(state.normal_field.normals))
        grad_camera += normals_vjp(state.camera_vertices, topology, state.normal_field, grad_normals)

    if grad_pixels is not None:
        rows = np.flatnonzero(np.any(grad_pixels != 0.0, axis=1))
        v = state.camera_vertices[rows]
        g = grad_pixels[rows]
        inv_z = 1.0 / v[:, 2]
        f = K.focal_px
        grad_camera[rows, 0] += f * inv_z * g[:, 0]
        grad_camera[rows, 1] += f * inv_z * g[:, 1]
        grad_camera[rows, 2] -= f * inv_z * inv_z * (v[:, 0] * g[:, 0] + v[:, 1] * g[:, 1])

    grad_vertices = grad_camera @ state.rotation
    grad_t = grad_camera.sum(axis=0)
    grad_rotation = grad_camera.T @ state.model_vertices
    grad_omega = np.einsum("kij,ij->k", rotation_derivatives(state.pose.omega), grad_rotation)
    return FormationGradient(grad_vertices, grad_reflectance, grad_gamma, grad_omega, grad_t)
