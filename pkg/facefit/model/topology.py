"""Mesh topology: triangles, one-ring neighbourhoods, landmark anchors and vertex sets"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from facefit.exceptions import InvalidModelError

# Smallest ring/segment counts that still give a closed manifold
_MIN_RINGS = 3
_MIN_SEGMENTS = 4


class AnchorKind(Enum):
    FIXED = "fixed"
    SLIDING = "sliding"


@dataclass(frozen=True)
class LandmarkAnchor:
    """Template correspondence of one landmark; sliding anchors start at `vertex`"""
    kind: AnchorKind
    vertex: int


@dataclass(eq=False)
class MeshTopology:
    vertex_count: int
    triangles: np.ndarray
    landmark_anchors: List[LandmarkAnchor] = field(default_factory=list)
    skin_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    contour_candidates: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.skin_mask = np.unique(np.asarray(self.skin_mask, dtype=np.int64))
        self.contour_candidates = np.unique(np.asarray(self.contour_candidates, dtype=np.int64))

    # ------------------------------------------------------------------
    # derived connectivity
    # ------------------------------------------------------------------

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (i < j), sorted lexicographically"""
        tri = self.triangles
        pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    @cached_property
    def one_ring(self) -> List[np.ndarray]:
        adjacency = self.adjacency
        return [adjacency.indices[adjacency.indptr[i]:adjacency.indptr[i + 1]].copy()
                for i in range(self.vertex_count)]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.vertex_count
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows))
        adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        adjacency.sort_indices()
        return adjacency

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Uniform Laplacian L with (L f)_i = f_i - mean_{j in N_i} f_j"""
        deg = self.degree.astype(float)
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        identity = sp.diags((deg > 0).astype(float))
        return (identity - sp.diags(inv) @ self.adjacency).tocsr()

    @cached_property
    def corner_scatter(self) -> Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        """Vertex x face incidence for each triangle corner"""
        n, f = self.vertex_count, len(self.triangles)
        cols = np.arange(f)
        ones = np.ones(f)
        return tuple(sp.csr_matrix((ones, (self.triangles[:, c], cols)), shape=(n, f))
                     for c in range(3))

    @cached_property
    def face_scatter(self) -> sp.csr_matrix:
        s0, s1, s2 = self.corner_scatter
        return (s0 + s1 + s2).tocsr()

    @property
    def fixed_anchor_mask(self) -> np.ndarray:
        return np.array([a.kind is AnchorKind.FIXED for a in self.landmark_anchors], dtype=bool)

    @property
    def anchor_vertices(self) -> np.ndarray:
        return np.array([a.vertex for a in self.landmark_anchors], dtype=np.int64)

    # ------------------------------------------------------------------
    # validation
    # ------------------------------------------------------------------

    def validate(self) -> None:
        """Raise InvalidModelError when an invariant does not hold"""
        n = self.vertex_count
        if n < 1:
            raise InvalidModelError("mesh must have at least one vertex")
        if len(self.triangles) == 0:
            raise InvalidModelError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise InvalidModelError("triangle index out of range")
        if np.any(self.triangles[:, 0] == self.triangles[:, 1]) or \
                np.any(self.triangles[:, 1] == self.triangles[:, 2]) or \
                np.any(self.triangles[:, 0] == self.triangles[:, 2]):
            raise InvalidModelError("triangle with repeated vertex")
        tri = self.triangles
        pairs = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
        _, counts = np.unique(pairs, axis=0, return_counts=True)
        if counts.max() > 2:
            raise InvalidModelError("non-manifold edge shared by more than two triangles")
        for name, indices in (("skin_mask", self.skin_mask), ("contour_candidates", self.contour_candidates)):
            if len(indices) == 0:
                raise InvalidModelError(f"{name} is empty")
            if indices.min() < 0 or indices.max() >= n:
                raise InvalidModelError(f"{name} index out of range")
        for anchor in self.landmark_anchors:
            if not 0 <= anchor.vertex < n:
                raise InvalidModelError(f"landmark anchor {anchor.vertex} out of range")


def uv_ellipsoid(target_vertices: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Latitude/longitude sphere with an odd ring count (so an equator ring exists).

    The pole axis is model-space y; segment 0 of every ring lies on the -z
    meridian (the side that faces the camera at identity pose). Returns unit
    sphere positions (N, 3) and outward-oriented triangles (F, 3). N is the
    achievable count closest to `target_vertices`.
    """
    if target_vertices < _MIN_RINGS * _MIN_SEGMENTS + 2:
        raise InvalidModelError(f"N={target_vertices} is too small to mesh")

    ideal = np.sqrt((target_vertices - 2) / 2.0)
    rings = max(_MIN_RINGS, 2 * int(round((ideal - 1.0) / 2.0)) + 1)
    segments = int(round((target_vertices - 2) / rings))
    segments = max(_MIN_SEGMENTS, segments + (segments % 2))

    polar = np.pi * np.arange(1, rings + 1) / (rings + 1)
    azimuth = 2.0 * np.pi * np.arange(segments) / segments
    pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
    ring_points = np.stack([np.sin(pp) * np.sin(aa), -np.cos(pp), -np.sin(pp) * np.cos(aa)], axis=-1)
    positions = np.concatenate([[[0.0, -1.0, 0.0]], ring_points.reshape(-1, 3), [[0.0, 1.0, 0.0]]])

    top, bottom = 0, len(positions) - 1

    def vid(ring, seg):
        return 1 + ring * segments + (seg % segments)

    triangles = []
    for j in range(segments):
        triangles.append((top, vid(0, j), vid(0, j + 1)))
        triangles.append((bottom, vid(rings - 1, j + 1), vid(rings - 1, j)))
    for k in range(rings - 1):
        for j in range(segments):
            a, b = vid(k, j), vid(k, j + 1)
            c, d = vid(k + 1, j), vid(k + 1, j + 1)
            triangles.append((a, c, b))
            triangles.append((b, c, d))
    triangles = np.array(triangles, dtype=np.int64)

    # orient outward
    corners = positions[triangles]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    flip = np.einsum("ij,ij->i", normals, corners.mean(axis=1)) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return positions, triangles


def nearest_vertices(positions: np.ndarray, targets: Sequence[Sequence[float]],
                     allowed: np.ndarray = None) -> np.ndarray:
    """Index of the closest (allowed) vertex for every target point"""
    pool = np.arange(len(positions)) if allowed is None else np.asarray(allowed)
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    d2 = ((positions[pool][None, :, :] - targets[:, None, :]) ** 2).sum(axis=-1)
    return pool[np.argmin(d2, axis=1)]
