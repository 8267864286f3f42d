"""Area-weighted vertex normals and their vector-Jacobian product"""

from typing import NamedTuple

import numpy as np

from facefit.model.topology import MeshTopology

FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])
_DEGENERATE_LENGTH = 1e-20


class NormalField(NamedTuple):
    normals: np.ndarray       # (N, 3) unit
    raw: np.ndarray           # (N, 3) sum of incident face cross products
    lengths: np.ndarray       # (N,)
    degenerate: np.ndarray    # (N,) bool, fallback normal used


def vertex_normals(vertices, topology: MeshTopology) -> NormalField:
    """Normalized sum of incident face normals weighted by triangle area"""
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    tri = topology.triangles
    face = np.cross(v[tri[:, 1]] - v[tri[:, 0]], v[tri[:, 2]] - v[tri[:, 0]])
    raw = topology.face_scatter @ face
    lengths = np.linalg.norm(raw, axis=1)
    degenerate = lengths <= _DEGENERATE_LENGTH
    safe = np.where(degenerate, 1.0, lengths)
    normals = raw / safe[:, None]
    normals[degenerate] = FALLBACK_NORMAL
    return NormalField(normals, raw, lengths, degenerate)


def normals_vjp(vertices: np.ndarray, topology: MeshTopology, field: NormalField,
                grad_normals: np.ndarray) -> np.ndarray:
    """Pull a gradient on unit normals back to vertex positions"""
    n = field.normals
    radial = np.einsum("ij,ij->i", n, grad_normals)
    safe = np.where(field.degenerate, 1.0, field.lengths)
    grad_raw = (grad_normals - n * radial[:, None]) / safe[:, None]
    grad_raw[field.degenerate] = 0.0

    tri = topology.triangles
    a = vertices[tri[:, 1]] - vertices[tri[:, 0]]
    b = vertices[tri[:, 2]] - vertices[tri[:, 0]]
    grad_face = topology.face_scatter.T @ grad_raw
    grad_a = np.cross(b, grad_face)
    grad_b = np.cross(grad_face, a)
    s0, s1, s2 = topology.corner_scatter
    return s1 @ grad_a + s2 @ grad_b - s0 @ (grad_a + grad_b)
