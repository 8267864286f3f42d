"""Z-buffered triangle rasterizer for previews and synthetic images (not differentiable)"""

from typing import NamedTuple, Optional

import numpy as np
from scipy import ndimage

from facefit.model.multilevel import MultiLevelModel
from facefit.render.camera import EPS_Z, CameraIntrinsics
from facefit.render.lighting import sh_values
from facefit.render.pipeline import Level, RenderState, render_state
from facefit.model.topology import MeshTopology

BACKGROUND_GRAY = 0.5


class Raster(NamedTuple):
    image: np.ndarray      # (H, W, 3) linear colour
    coverage: np.ndarray   # (H, W) bool, pixel covered by the mesh


def _background(K: CameraIntrinsics, background: Optional[np.ndarray]) -> np.ndarray:
    if background is None:
        return np.full((K.height, K.width, 3), BACKGROUND_GRAY)
    if background.shape[:2] != (K.height, K.width):
        raise ValueError(f"background is {background.shape[:2]}, camera expects {(K.height, K.width)}")
    return np.array(background, dtype=float, copy=True)


def rasterize_state(state: RenderState, topology: MeshTopology, K: CameraIntrinsics,
                    background: Optional[np.ndarray] = None,
                    vertex_colors: Optional[np.ndarray] = None) -> Raster:
    """Fill camera-facing triangles with barycentric colour, nearest depth wins"""
    image = _background(K, background)
    coverage = np.zeros((K.height, K.width), dtype=bool)
    if not state.visible.any():
        return Raster(image, coverage)

    colors = state.colors if vertex_colors is None else vertex_colors
    depth = np.full((K.height, K.width), np.inf)
    v_cam = state.camera_vertices
    tri = topology.triangles

    corners = v_cam[tri]
    face_normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    facing = np.einsum("ij,ij->i", face_normals, corners.mean(axis=1)) < 0.0
    in_front = (corners[:, :, 2] > EPS_Z).all(axis=1)

    for f in np.flatnonzero(facing & in_front):
        p = state.pixels[tri[f]]
        x_min = max(int(np.ceil(p[:, 0].min())), 0)
        x_max = min(int(np.floor(p[:, 0].max())), K.width - 1)
        y_min = max(int(np.ceil(p[:, 1].min())), 0)
        y_max = min(int(np.floor(p[:, 1].max())), K.height - 1)
        if x_min > x_max or y_min > y_max:
            continue
        area = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        if abs(area) < 1e-12:
            continue
        xs, ys = np.meshgrid(np.arange(x_min, x_max + 1), np.arange(y_min, y_max + 1))
        w1 = ((xs - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (ys - p[0, 1])) / area
        w2 = ((p[1, 0] - p[0, 0]) * (ys - p[0, 1]) - (xs - p[0, 0]) * (p[1, 1] - p[0, 1])) / area
        w0 = 1.0 - w1 - w2
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        z = w0 * corners[f, 0, 2] + w1 * corners[f, 1, 2] + w2 * corners[f, 2, 2]
        ys_in, xs_in = ys[inside], xs[inside]
        closer = z[inside] < depth[ys_in, xs_in]
        if not closer.any():
            continue
        ys_in, xs_in = ys_in[closer], xs_in[closer]
        bary = np.stack([w0[inside][closer], w1[inside][closer], w2[inside][closer]], axis=1)
        depth[ys_in, xs_in] = z[inside][closer]
        image[ys_in, xs_in] = bary @ colors[tri[f]]
        coverage[ys_in, xs_in] = True
    return Raster(image, coverage)


def bleed_background(raster: Raster) -> np.ndarray:
    """Replace every uncovered pixel by the colour of its nearest covered pixel"""
    if not raster.coverage.any():
        return raster.image.copy()
    _, (rows, cols) = ndimage.distance_transform_edt(~raster.coverage, return_indices=True)
    return raster.image[rows, cols]


def rasterize_preview(model: MultiLevelModel, params, K: CameraIntrinsics, level: Level = Level.FINAL,
                      background: Optional[np.ndarray] = None) -> np.ndarray:
    """Shaded preview of one level over the input image (or flat gray)"""
    state = render_state(model, params, K, level)
    return rasterize_state(state, model.topology, K, background).image


def reflectance_preview(model: MultiLevelModel, params, K: CameraIntrinsics,
                        level: Level = Level.FINAL, background: Optional[np.ndarray] = None) -> np.ndarray:
    """Unlit reflectance of one level"""
    state = render_state(model, params, K, level)
    return rasterize_state(state, model.topology, K, background, vertex_colors=state.reflectance).image


def illumination_sphere(gamma: np.ndarray, size: int, albedo: float = 1.0) -> np.ndarray:
    """Unit sphere seen from the camera, shaded with the SH illumination"""
    image = np.full((size, size, 3), BACKGROUND_GRAY)
    centre = (size - 1) / 2.0
    radius = max(centre, 1e-9)
    ys, xs = np.mgrid[0:size, 0:size]
    nx = (xs - centre) / radius
    ny = (ys - centre) / radius
    inside = nx ** 2 + ny ** 2 <= 1.0
    nz = -np.sqrt(np.clip(1.0 - nx ** 2 - ny ** 2, 0.0, None))
    normals = np.stack([nx[inside], ny[inside], nz[inside]], axis=1)
    image[inside] = albedo * (sh_values(normals) @ np.asarray(gamma, dtype=float))
    return image
