"""Individual terms of the self-supervised energy and the photometric diagnostic"""

from typing import NamedTuple, Optional, Sequence

import numpy as np

from facefit.energy.weights import Weights
from facefit.model.base_model import BaseModel
from facefit.model.topology import MeshTopology
from facefit.render.image import ImageSample, sample_image_with_gradient
from facefit.utils.logging_setup import log_diagnostic

GLO_SAMPLES = 6


class PhotoLevel(NamedTuple):
    """Per-level photometric residuals over the visible set"""
    value: float
    indices: np.ndarray        # visible vertex ids
    residuals: np.ndarray      # (|V|, 3) I(u_i) - c_i
    norms: np.ndarray          # (|V|,) smoothed ||residual||
    sample: Optional[ImageSample]


def photo_level(state, image: np.ndarray, eps_l21: float) -> PhotoLevel:
    """(1/N) sum over visible vertices of sqrt(||I(u_i) - c_i||^2 + eps^2)"""
    indices = state.visible_indices
    if len(indices) == 0:
        log_diagnostic("energy.terms", f"empty visible set on {state.level.value} level; photometric term is 0")
        return PhotoLevel(0.0, indices, np.zeros((0, 3)), np.zeros(0), None)
    sample = sample_image_with_gradient(image, state.pixels[indices])
    residuals = sample.colors - state.colors[indices]
    norms = np.sqrt(np.einsum("ij,ij->i", residuals, residuals) + eps_l21 * eps_l21)
    return PhotoLevel(float(norms.sum() / state.vertex_count), indices, residuals, norms, sample)


def e_photo(states: Sequence, image: np.ndarray, weights: Weights) -> float:
    """Dense multi-level photometric term, summed over the given levels"""
    return float(sum(photo_level(state, image, weights.eps_l21).value for state in states))


def e_sparse(base_state, lms) -> float:
    """(1/|F|) sum_f c_f ||f - u_{k_f}^b||^2 on base-level projections"""
    if lms is None or len(lms) == 0:
        return 0.0
    diff = lms.positions - base_state.pixels[lms.anchors]
    return float(np.sum(lms.confidences * np.einsum("ij,ij->i", diff, diff)) / len(lms))


def e_std(alpha, beta, base: BaseModel, weights: Weights) -> float:
    za = np.asarray(alpha, dtype=float) / base.sigma_g
    zb = np.asarray(beta, dtype=float) / base.sigma_r
    return float(za @ za + weights.w_rstd * (zb @ zb))


def e_smo(field, topology: MeshTopology, weights: Weights) -> float:
    """Uniform-Laplacian smoothness of the geometry correction field"""
    lap = topology.laplacian @ np.asarray(field, dtype=float).reshape(-1, 3)
    return float(weights.w_smo * np.sum(lap * lap) / topology.vertex_count)


def _edge_colors(image: np.ndarray, state, weights: Weights) -> np.ndarray:
    colors = np.zeros((state.vertex_count, 3))
    indices = state.visible_indices
    if len(indices):
        colors[indices] = sample_image_with_gradient(image, state.pixels[indices]).colors
        if weights.chroma_normalized:
            total = colors[indices].sum(axis=1, keepdims=True)
            colors[indices] = colors[indices] / np.where(total > 1e-12, total, 1.0)
    return colors


def chroma_weights(image: np.ndarray, state, topology: MeshTopology, weights: Weights) -> np.ndarray:
    """
    w_ij = exp(-chroma_alpha * ||I(u_i) - I(u_j)||) for every undirected edge.

    Uses final-level projections of the previous iterate; an edge with an
    invisible endpoint gets exp(-chroma_alpha). The result is a constant of the
    energy.
    """
    edges = topology.edges
    colors = _edge_colors(image, state, weights)
    distance = np.linalg.norm(colors[edges[:, 0]] - colors[edges[:, 1]], axis=1)
    both_visible = state.visible[edges[:, 0]] & state.visible[edges[:, 1]]
    distance = np.where(both_visible, distance, 1.0)
    return np.exp(-weights.chroma_alpha * distance)


def e_ref(reflectance, topology: MeshTopology, w_ij: np.ndarray, weights: Weights) -> float:
    """
    Weighted sparsity of reflectance differences over one-rings.

    Each undirected edge appears twice in the neighbourhood sum.
    """
    r = np.asarray(reflectance, dtype=float).reshape(-1, 3)
    edges = topology.edges
    diff = r[edges[:, 0]] - r[edges[:, 1]]
    power = (np.einsum("ij,ij->i", diff, diff) + weights.eps_p) ** (0.5 * weights.p_exp)
    return float(weights.w_ref * 2.0 * np.sum(w_ij * power) / topology.vertex_count)


def sample_glo_pairs(topology: MeshTopology, seed: int, count: int = GLO_SAMPLES) -> np.ndarray:
    """count random partners (drawn from the skin mask) for every skin vertex"""
    rng = np.random.default_rng(seed)
    mask = topology.skin_mask
    return mask[rng.integers(0, len(mask), size=(len(mask), count))]


def e_glo(reflectance, mask: np.ndarray, samples: np.ndarray, weights: Weights) -> float:
    """Global reflectance constancy over the skin mask"""
    if len(mask) == 0:
        return 0.0
    r = np.asarray(reflectance, dtype=float).reshape(-1, 3)
    diff = r[mask][:, None, :] - r[samples]
    return float(weights.w_glo * np.sum(diff * diff) / len(mask))


def e_sta(field, weights: Weights) -> float:
    """Small geometric corrections: w_sta/N sum_i ||F_i||^2"""
    f = np.asarray(field, dtype=float).reshape(-1, 3)
    return float(weights.w_sta * np.sum(f * f) / len(f))


def photometric_error(state, image: np.ndarray) -> float:
    """Mean Euclidean RGB distance over the visible vertices (NaN when none is visible)"""
    indices = state.visible_indices
    if len(indices) == 0:
        log_diagnostic("energy.terms", "photometric error undefined: no visible vertex")
        return float("nan")
    colors = sample_image_with_gradient(image, state.pixels[indices]).colors
    return float(np.mean(np.linalg.norm(colors - state.colors[indices], axis=1)))
