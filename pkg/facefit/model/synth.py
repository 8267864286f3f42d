"""Synthetic multi-level model: a smooth head-like ellipsoid with a statistical basis"""

from typing import Optional

import numpy as np

from facefit.exceptions import InvalidModelError
from facefit.model.base_model import BaseModel
from facefit.model.corrective import CorrectiveMap, CorrectiveVariant
from facefit.model.multilevel import MultiLevelModel
from facefit.model.topology import AnchorKind, LandmarkAnchor, MeshTopology, nearest_vertices, uv_ellipsoid
from facefit.utils.logging_setup import get_logger

logger = get_logger("model.synth")

# Head shape (model units)
HEAD_RADII = np.array([0.75, 0.95, 0.85])
NOSE_HEIGHT = 0.22
NOSE_WIDTH = 0.12

# Per-vertex RMS displacement / colour change of one basis column
SHAPE_RMS = 0.02
EXPRESSION_RMS = 0.03
REFLECTANCE_RMS = 0.04
SIGMA_DECAY = 0.85

SKIN_TONE = np.array([0.78, 0.57, 0.47])
LIP_TINT = np.array([0.05, 0.18, 0.14])

FIXED_LANDMARKS = 49
SLIDING_LANDMARKS = 17


def _front_point(ux: float, uy: float) -> list:
    return [ux, uy, -np.sqrt(max(0.0, 1.0 - ux * ux - uy * uy))]


def _fixed_targets(nose_tip: np.ndarray) -> list:
    """49 interior landmarks (brows, nose, eyes, mouth) on the unit sphere"""
    targets = []
    for side in (-1.0, 1.0):
        for x in np.linspace(0.15, 0.55, 5):
            targets.append(_front_point(side * x, -0.42 + 0.05 * (x - 0.35) ** 2))
    for y in (-0.30, -0.20, -0.10):
        targets.append(_front_point(0.0, y))
    targets.append(list(nose_tip))
    for x in np.linspace(-0.16, 0.16, 5):
        targets.append(_front_point(x, 0.10 + 0.5 * x * x))
    for side in (-1.0, 1.0):
        for angle in np.linspace(0.0, 2.0 * np.pi, 6, endpoint=False):
            targets.append(_front_point(side * 0.33 + 0.09 * np.cos(angle), -0.22 + 0.04 * np.sin(angle)))
    for angle in np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False):
        targets.append(_front_point(0.25 * np.cos(angle), 0.38 + 0.10 * np.sin(angle)))
    for angle in np.linspace(0.0, 2.0 * np.pi, 6, endpoint=False):
        targets.append(_front_point(0.12 * np.cos(angle), 0.38 + 0.04 * np.sin(angle)))
    return targets


def _contour_targets() -> list:
    """17 jaw-line landmarks from one temple round the chin to the other"""
    targets = []
    for psi in np.linspace(np.pi, 0.0, SLIDING_LANDMARKS):
        targets.append(_front_point(0.95 * np.cos(psi), 0.15 + 0.75 * np.sin(psi)))
    return targets


def smooth_field(rng: np.random.Generator, unit: np.ndarray, waves: int = 6,
                 low: float = 0.6, high: float = 1.8) -> np.ndarray:
    """Random low-frequency 3-vector field on the unit sphere with unit per-vertex RMS"""
    field = np.zeros_like(unit)
    for c in range(3):
        directions = rng.standard_normal((waves, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        frequencies = rng.uniform(low, high, waves)
        phases = rng.uniform(0.0, 2.0 * np.pi, waves)
        amplitudes = rng.standard_normal(waves)
        field[:, c] = (np.cos(unit @ (directions * frequencies[:, None]).T + phases) * amplitudes).sum(axis=1)
    rms = np.sqrt(np.mean(np.sum(field ** 2, axis=1)))
    return field / max(rms, 1e-12)


def mouth_weight(unit: np.ndarray) -> np.ndarray:
    front = np.clip(-unit[:, 2], 0.0, 1.0)
    return np.exp(-(unit[:, 0] ** 2 + (unit[:, 1] - 0.42) ** 2) / (2 * 0.22 ** 2)) * front


def beard_region(unit: np.ndarray) -> np.ndarray:
    """Lower face where facial hair would grow; kept out of the skin mask"""
    return (unit[:, 1] > 0.45) & (unit[:, 2] < 0.2)


def synth_model(seed: int, n_vertices: int, m_s: int, m_e: int, m_r: int, corrective_dim: int,
                variant: CorrectiveVariant = CorrectiveVariant.LINEAR,
                hidden_dim: Optional[int] = None) -> MultiLevelModel:
    """
    Deterministic stand-in for a scan-derived morphable model.

    The mesh is a subdivided ellipsoid with a nose-like protrusion on the -z
    side; model +y points down the face (towards the chin), matching image rows.
    """
    if min(m_s, m_e, m_r) < 1 or corrective_dim < 0:
        raise InvalidModelError("model dimensions must be >= 1 (C >= 0)")
    rng = np.random.default_rng(seed)

    unit, triangles = uv_ellipsoid(n_vertices)
    n = len(unit)

    positions = unit * HEAD_RADII
    nose = NOSE_HEIGHT * np.exp(-(unit[:, 0] ** 2 + unit[:, 1] ** 2) / (2 * NOSE_WIDTH ** 2))
    positions[:, 2] -= nose * (unit[:, 2] < 0)
    nose_tip = int(np.argmin(positions[:, 2]))

    # ---- geometry basis ------------------------------------------------
    mouth = mouth_weight(unit)
    columns = [SHAPE_RMS * smooth_field(rng, unit).reshape(-1) for _ in range(m_s)]
    for _ in range(m_e):
        field = smooth_field(rng, unit, low=1.0, high=2.5) * mouth[:, None]
        field /= max(np.sqrt(np.mean(np.sum(field ** 2, axis=1))), 1e-12)
        columns.append(EXPRESSION_RMS * field.reshape(-1))
    B_g = np.stack(columns, axis=1)
    sigma_g = SIGMA_DECAY ** np.arange(m_s + m_e)

    # ---- reflectance ----------------------------------------------------
    variation = smooth_field(rng, unit)[:, :1]
    lips = np.exp(-(unit[:, 0] ** 2 / 0.2 ** 2 + (unit[:, 1] - 0.38) ** 2 / 0.07 ** 2)) * (unit[:, 2] < 0)
    a_r = SKIN_TONE[None, :] * (1.0 + 0.06 * variation) - lips[:, None] * LIP_TINT[None, :]
    a_r = np.clip(a_r, 0.05, 0.95)
    B_r = np.stack([REFLECTANCE_RMS * smooth_field(rng, unit).reshape(-1) for _ in range(m_r)], axis=1)
    sigma_r = SIGMA_DECAY ** np.arange(m_r)

    base = BaseModel(a_g=positions.reshape(-1), a_r=a_r.reshape(-1), B_g=B_g, B_r=B_r,
                     sigma_g=sigma_g, sigma_r=sigma_r, m_s=m_s, m_e=m_e, m_r=m_r)

    # ---- vertex sets and landmarks ---------------------------------------
    front = np.flatnonzero(unit[:, 2] < 0)
    skin = np.flatnonzero((unit[:, 2] < 0.15) & (unit[:, 1] > -0.7) & ~beard_region(unit))
    contour = np.flatnonzero((unit[:, 2] > -0.6) & (unit[:, 2] < 0.3) & (unit[:, 1] > -0.5))

    fixed = nearest_vertices(unit, _fixed_targets(unit[nose_tip]), allowed=front)
    sliding = nearest_vertices(unit, _contour_targets(), allowed=contour)
    anchors = [LandmarkAnchor(AnchorKind.FIXED, int(v)) for v in fixed]
    anchors += [LandmarkAnchor(AnchorKind.SLIDING, int(v)) for v in sliding]

    topology = MeshTopology(vertex_count=n, triangles=triangles, landmark_anchors=anchors,
                            skin_mask=skin, contour_candidates=contour)

    geom_corr = CorrectiveMap.initialize(variant, corrective_dim, 3 * n, rng, hidden_dim)
    refl_corr = CorrectiveMap.initialize(variant, corrective_dim, 3 * n, rng, hidden_dim)

    model = MultiLevelModel(topology, base, geom_corr, refl_corr, seed=seed)
    model.validate()
    logger.info(f"synthesized model seed={seed} N={n} dims=({m_s},{m_e},{m_r}) C={corrective_dim} "
                f"variant={variant.value}")
    return model


def reinitialize_correctives(model: MultiLevelModel, variant: CorrectiveVariant, corrective_dim: int,
                             seed: int, hidden_dim: Optional[int] = None) -> MultiLevelModel:
    """Fresh correctives of a different variant or size on an existing base model"""
    rng = np.random.default_rng(seed)
    n3 = 3 * model.vertex_count
    geom_corr = CorrectiveMap.initialize(variant, corrective_dim, n3, rng, hidden_dim)
    refl_corr = CorrectiveMap.initialize(variant, corrective_dim, n3, rng, hidden_dim)
    return model.with_correctives(geom_corr, refl_corr)
