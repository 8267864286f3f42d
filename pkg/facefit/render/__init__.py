"""Differentiable point-based image formation"""

from facefit.render.camera import CameraIntrinsics, Pose, project, rigid_transform, rotation_matrix
from facefit.render.image import sample_image, srgb_to_linear, linear_to_srgb
from facefit.render.lighting import Illumination, sh_basis, shade
from facefit.render.normals import vertex_normals
from facefit.render.pipeline import Level, RenderState, render_geometry, render_state, visibility
from facefit.render.rasterizer import illumination_sphere, rasterize_preview

__all__ = [
    'CameraIntrinsics', 'Illumination', 'Level', 'Pose', 'RenderState', 'illumination_sphere',
    'linear_to_srgb', 'project', 'rasterize_preview', 'render_geometry', 'render_state', 'rigid_transform',
    'rotation_matrix', 'sample_image', 'sh_basis', 'shade', 'srgb_to_linear', 'vertex_normals', 'visibility',
]
