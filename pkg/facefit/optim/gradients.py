"""
Analytic gradient of the total energy.

The backward pass walks the tape recorded by `energy.total.forward`, so the
energy value returned here is the very float `e_total` computes. Visible sets,
landmark correspondences, chroma weights and skin samples are constants.
"""

from typing import Optional, Tuple

import numpy as np

from facefit.energy.terms import PhotoLevel
from facefit.energy.total import EnergyContext, EnergyReport, EnergyTape, forward
from facefit.exceptions import GradientError
from facefit.optim.params import GradientVector
from facefit.render.pipeline import backprop_formation

MODES = ("fit", "train")


def _photo_backward(level: Optional[PhotoLevel], n: int, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """d(scale * photo level)/d pixels and d/d colours, (N, 2) and (N, 3)"""
    grad_pixels = np.zeros((n, 2))
    grad_colors = np.zeros((n, 3))
    if level is None or len(level.indices) == 0 or scale == 0.0:
        return grad_pixels, grad_colors
    g_res = scale * level.residuals / (n * level.norms[:, None])
    grad_pixels[level.indices] = np.einsum("mc,mcd->md", g_res, level.sample.gradient)
    grad_colors[level.indices] = -g_res
    return grad_pixels, grad_colors


def _sparse_backward(tape: EnergyTape, ctx: EnergyContext, grad_pixels: np.ndarray) -> None:
    lms = ctx.active_landmarks
    if lms is None or len(lms) == 0:
        return
    diff = lms.positions - tape.base.pixels[lms.anchors]
    np.add.at(grad_pixels, lms.anchors, -2.0 * lms.confidences[:, None] * diff / len(lms))


def _ref_backward(reflectance: np.ndarray, ctx: EnergyContext, chroma: np.ndarray) -> np.ndarray:
    w = ctx.weights
    topology = ctx.model.topology
    edges = topology.edges
    diff = reflectance[edges[:, 0]] - reflectance[edges[:, 1]]
    squared = np.einsum("ij,ij->i", diff, diff) + w.eps_p
    coeff = w.w_ref * 2.0 * chroma * w.p_exp * squared ** (0.5 * w.p_exp - 1.0) / topology.vertex_count
    g_edge = coeff[:, None] * diff
    grad = np.zeros_like(reflectance)
    np.add.at(grad, edges[:, 0], g_edge)
    np.add.at(grad, edges[:, 1], -g_edge)
    return grad


def _glo_backward(reflectance: np.ndarray, ctx: EnergyContext) -> np.ndarray:
    mask = ctx.model.topology.skin_mask
    grad = np.zeros_like(reflectance)
    if len(mask) == 0:
        return grad
    samples = ctx.glo_samples
    diff = reflectance[mask][:, None, :] - reflectance[samples]
    g_pair = 2.0 * ctx.weights.w_glo * diff / len(mask)
    np.add.at(grad, mask, g_pair.sum(axis=1))
    np.add.at(grad, samples.reshape(-1), -g_pair.reshape(-1, 3))
    return grad


def backward(ctx: EnergyContext, tape: EnergyTape, mode: str = "fit") -> GradientVector:
    """Chain rule over a recorded forward pass"""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got '{mode}'")
    model, w = ctx.model, ctx.weights
    topology = model.topology
    n = topology.vertex_count
    params = tape.params

    # base level: photometric + landmarks
    g_pix_b, g_col_b = _photo_backward(tape.photo_base, n, w.w_photo)
    _sparse_backward(tape, ctx, g_pix_b)
    grad_b = backprop_formation(tape.base, topology, ctx.K, g_pix_b, g_col_b)

    # final level: photometric
    g_pix_f, g_col_f = _photo_backward(tape.photo_final, n, w.w_photo)
    grad_f = backprop_formation(tape.final, topology, ctx.K, g_pix_f, g_col_f)

    # regularizers on the final level and the correction fields
    geom = tape.geom_field.reshape(-1, 3)
    lap = topology.laplacian
    g_geom_field = w.w_reg * (2.0 * w.w_smo / n) * (lap.T @ (lap @ geom))
    g_geom_field += w.w_reg * (2.0 * w.w_sta / n) * geom
    r_final = tape.final.reflectance
    g_refl_final = grad_f.reflectance + w.w_reg * (_ref_backward(r_final, ctx, tape.chroma)
                                                   + _glo_backward(r_final, ctx))
    g_vert_final = grad_f.vertices

    # v^f = v^b + F_g(delta_g), r^f = r^b + F_r(delta_r)
    g_v_base = (grad_b.vertices + g_vert_final).reshape(-1)
    g_r_base = (grad_b.reflectance + g_refl_final).reshape(-1)
    g_fg = (g_vert_final + g_geom_field).reshape(-1)
    g_fr = g_refl_final.reshape(-1)

    with_layers = mode == "train"
    g_delta_g, theta_g = model.geom_corr.backward(tape.geom_cache, g_fg, with_layers)
    g_delta_r, theta_r = model.refl_corr.backward(tape.refl_cache, g_fr, with_layers)

    base = model.base
    g_alpha = base.B_g.T @ g_v_base + w.w_reg * 2.0 * params.alpha / base.sigma_g ** 2
    g_beta = base.B_r.T @ g_r_base + w.w_reg * w.w_rstd * 2.0 * params.beta / base.sigma_r ** 2

    grad = GradientVector(alpha=g_alpha, beta=g_beta, delta_g=g_delta_g, delta_r=g_delta_r,
                          omega=grad_b.omega + grad_f.omega, t=grad_b.t + grad_f.t,
                          gamma_b=grad_b.gamma, gamma_f=grad_f.gamma, theta_g=theta_g, theta_r=theta_r)
    bad = grad.non_finite_blocks()
    if bad:
        raise GradientError(bad[0], "non-finite partial derivative")
    return grad


def evaluate_with_gradient(ctx: EnergyContext, params, mode: str = "fit") -> Tuple[EnergyReport, GradientVector]:
    tape = forward(ctx, params)
    return tape.report, backward(ctx, tape, mode)


def grad_total(ctx: EnergyContext, params, mode: str = "fit") -> Tuple[float, GradientVector]:
    """(E_total, dE/dx) and, in train mode, dE/dTheta"""
    report, grad = evaluate_with_gradient(ctx, params, mode)
    return report.total, grad
