"""Sparse 2D landmark supervision: fixed anchors and sliding contour points"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from facefit.exceptions import ConfigError
from facefit.model.topology import AnchorKind, MeshTopology
from facefit.render.camera import CameraIntrinsics
from facefit.utils.logging_setup import get_logger, log_diagnostic

logger = get_logger("landmarks")


@dataclass(eq=False)
class LandmarkSet:
    """
    Detected 2D points with their current mesh correspondence.

    `anchors` holds k_f; only entries of kind SLIDING are ever reassigned.
    """
    positions: np.ndarray          # (F, 2) pixels
    confidences: np.ndarray        # (F,) in [0, 1]
    kinds: List[AnchorKind]
    anchors: np.ndarray            # (F,) vertex indices

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.confidences = np.asarray(self.confidences, dtype=float).reshape(-1)
        self.anchors = np.asarray(self.anchors, dtype=np.int64).reshape(-1)
        self.kinds = [AnchorKind(k) for k in self.kinds]
        count = len(self.positions)
        if not (len(self.confidences) == len(self.kinds) == len(self.anchors) == count):
            raise ConfigError("landmark fields have inconsistent lengths")
        if np.any(self.confidences < 0.0) or np.any(self.confidences > 1.0):
            raise ConfigError("landmark confidences must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def sliding_mask(self) -> np.ndarray:
        return np.array([k is AnchorKind.SLIDING for k in self.kinds], dtype=bool)

    @property
    def fixed_mask(self) -> np.ndarray:
        return ~self.sliding_mask

    def copy(self) -> "LandmarkSet":
        return LandmarkSet(self.positions.copy(), self.confidences.copy(), list(self.kinds), self.anchors.copy())

    def with_anchors(self, anchors: np.ndarray) -> "LandmarkSet":
        return replace(self, anchors=np.asarray(anchors, dtype=np.int64).copy(), kinds=list(self.kinds))

    def validate(self, topology: MeshTopology) -> None:
        if len(self) and (self.anchors.min() < 0 or self.anchors.max() >= topology.vertex_count):
            raise ConfigError("landmark anchor index out of range for this model")

    @classmethod
    def from_topology(cls, positions: np.ndarray, topology: MeshTopology,
                      confidences: Optional[np.ndarray] = None) -> "LandmarkSet":
        """Pair detected positions with the model's anchor table, in order"""
        anchors = topology.landmark_anchors
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        if len(positions) != len(anchors):
            raise ConfigError(f"{len(positions)} landmarks given, model defines {len(anchors)}")
        if confidences is None:
            confidences = np.ones(len(anchors))
        return cls(positions, confidences, [a.kind for a in anchors], [a.vertex for a in anchors])


def backproject_ray(f, K: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Camera-space viewing ray through pixel f: origin at the camera centre, unit direction"""
    f = np.asarray(f, dtype=float)
    direction = np.array([(f[0] - K.cx) / K.focal_px, (f[1] - K.cy) / K.focal_px, 1.0])
    return np.zeros(3), direction / np.linalg.norm(direction)


def ray_distances(points: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Squared distance of camera-space points to a ray from the origin"""
    along = points @ direction
    return np.einsum("ij,ij->i", points, points) - along * along


def update_sliding_indices(state, lms: LandmarkSet, topology: MeshTopology,
                           K: CameraIntrinsics) -> LandmarkSet:
    """
    Reassign every sliding landmark to the contour vertex closest to its viewing ray.

    Candidates are the visible contour vertices of the (base-level) state, or all
    contour vertices when none is visible. Ties go to the lowest vertex index.
    """
    anchors = lms.anchors.copy()
    sliding = np.flatnonzero(lms.sliding_mask)
    if len(sliding) == 0:
        return lms

    candidates = topology.contour_candidates
    visible = candidates[state.visible[candidates]]
    if len(visible):
        candidates = visible
    if len(candidates) == 0:
        log_diagnostic("landmarks", f"no contour candidates; {len(sliding)} sliding landmark(s) kept")
        return lms

    points = state.camera_vertices[candidates]
    for f in sliding:
        _, direction = backproject_ray(lms.positions[f], K)
        distances = ray_distances(points, direction)
        anchors[f] = candidates[int(np.argmin(distances))]
    return lms.with_anchors(anchors)


def projected_landmarks(state, topology: MeshTopology) -> np.ndarray:
    """Pixel positions of the model's anchor vertices in a rendered state"""
    return state.pixels[topology.anchor_vertices]


# ----------------------------------------------------------------------
# .lms files
# ----------------------------------------------------------------------

def read_landmarks(path: Union[str, Path], topology: Optional[MeshTopology] = None) -> LandmarkSet:
    """
    Parse `x y confidence kind [anchor_index]` lines; '#' starts a comment.

    A missing anchor index is taken from the model's anchor table at the same
    position, which then requires `topology`.
    """
    path = Path(path)
    positions, confidences, kinds, anchors = [], [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (4, 5):
                raise ConfigError(f"{path}:{lineno}: expected 'x y confidence kind [anchor]'")
            try:
                x, y, c = float(parts[0]), float(parts[1]), float(parts[2])
                kind = AnchorKind(parts[3].lower())
                anchor = int(parts[4]) if len(parts) == 5 else None
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from e
            if anchor is None:
                index = len(positions)
                if topology is None or index >= len(topology.landmark_anchors):
                    raise ConfigError(f"{path}:{lineno}: anchor index missing and no model default")
                anchor = topology.landmark_anchors[index].vertex
            positions.append((x, y))
            confidences.append(c)
            kinds.append(kind)
            anchors.append(anchor)
    try:
        lms = LandmarkSet(np.array(positions, dtype=float).reshape(-1, 2), confidences, kinds, anchors)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e
    if topology is not None:
        lms.validate(topology)
    logger.debug(f"read {len(lms)} landmarks from {path}")
    return lms


def write_landmarks(path: Union[str, Path], lms: LandmarkSet, header: Sequence[str] = ()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for line in header:
            f.write(f"# {line}\n")
        for (x, y), c, kind, anchor in zip(lms.positions, lms.confidences, lms.kinds, lms.anchors):
            f.write(f"{float(x)!r} {float(y)!r} {float(c)!r} {kind.value} {int(anchor)}\n")
