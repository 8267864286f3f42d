"""Finite-difference verification of the analytic gradient"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from facefit.energy.total import EnergyContext, e_total
from facefit.energy.weights import Weights
from facefit.landmarks import LandmarkSet
from facefit.model.corrective import AffineLayer, CorrectiveVariant
from facefit.model.multilevel import MultiLevelModel
from facefit.model.synth import synth_model
from facefit.optim.gradients import grad_total
from facefit.optim.params import BLOCKS, GradientVector, ParamVector
from facefit.render.camera import CameraIntrinsics
from facefit.render.lighting import SH_C0
from facefit.render.pipeline import Level, render_state
from facefit.utils.logging_setup import get_logger

logger = get_logger("optim.gradcheck")

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-7
DEFAULT_TOLERANCE = 1e-3
# Components smaller than this are not compared
MAGNITUDE_FLOOR = 1e-6


def _step(value: float, h: float, floor: float) -> float:
    return max(h * abs(value), floor)


def central_difference(fn: Callable[[], float], array: np.ndarray, index, h: float, floor: float) -> float:
    """Perturb array[index] in place on both sides and restore it"""
    original = array[index]
    step = _step(original, h, floor)
    array[index] = original + step
    plus = fn()
    array[index] = original - step
    minus = fn()
    array[index] = original
    return (plus - minus) / (2.0 * step)


def finite_diff(energy: Callable[[ParamVector], float], params: ParamVector, h: float = DEFAULT_STEP,
                floor: float = DEFAULT_FLOOR, blocks: Sequence[str] = BLOCKS,
                coordinates: Optional[Dict[str, np.ndarray]] = None) -> GradientVector:
    """
    Central differences of `energy` per scalar coordinate of x.

    `energy` must keep its constants (visible sets, correspondences, chroma
    weights) frozen. Coordinates not requested are left at 0.
    """
    work = params.copy()
    grad = GradientVector(**{name: np.zeros_like(getattr(params, name)) for name in BLOCKS})
    for name in blocks:
        values = getattr(work, name).reshape(-1)
        target = getattr(grad, name).reshape(-1)
        indices = range(values.size) if coordinates is None or name not in coordinates else coordinates[name]
        for i in indices:
            target[i] = central_difference(lambda: energy(work), values, i, h, floor)
    return grad


def finite_diff_layers(energy: Callable[[], float], layers: List[AffineLayer], h: float = DEFAULT_STEP,
                       floor: float = DEFAULT_FLOOR,
                       coordinates: Optional[List[Dict[str, np.ndarray]]] = None) -> List[AffineLayer]:
    """Central differences over corrective layer entries (perturbed in place, then restored)"""
    out = []
    for k, layer in enumerate(layers):
        grad = AffineLayer(np.zeros_like(layer.matrix), np.zeros_like(layer.bias))
        for part in ("matrix", "bias"):
            values = getattr(layer, part).reshape(-1)
            target = getattr(grad, part).reshape(-1)
            indices = range(values.size) if coordinates is None else coordinates[k][part]
            for i in indices:
                target[i] = central_difference(energy, values, i, h, floor)
        out.append(grad)
    return out


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

@dataclass
class BlockCheck:
    block: str
    compared: int
    max_rel_error: float
    mean_rel_error: float
    passed: bool


@dataclass
class GradcheckReport:
    seed: int
    tolerance: float
    blocks: List[BlockCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.blocks)

    def table(self) -> str:
        lines = [f"{'block':<16}{'compared':>10}{'max rel':>14}{'mean rel':>14}  status"]
        for b in self.blocks:
            lines.append(f"{b.block:<16}{b.compared:>10}{b.max_rel_error:>14.3e}{b.mean_rel_error:>14.3e}  "
                         f"{'ok' if b.passed else 'FAIL'}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "tolerance": self.tolerance, "passed": self.passed,
                "blocks": [asdict(b) for b in self.blocks]}

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|) over components where that magnitude exceeds MAGNITUDE_FLOOR"""
    analytic = np.asarray(analytic, dtype=float).reshape(-1)
    numeric = np.asarray(numeric, dtype=float).reshape(-1)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    keep = scale > MAGNITUDE_FLOOR
    return np.abs(analytic[keep] - numeric[keep]) / scale[keep]


def compare(name: str, analytic: np.ndarray, numeric: np.ndarray, tolerance: float) -> BlockCheck:
    errors = relative_errors(analytic, numeric)
    if len(errors) == 0:
        return BlockCheck(name, 0, 0.0, 0.0, True)
    return BlockCheck(name, int(len(errors)), float(errors.max()), float(errors.mean()),
                      bool(errors.max() < tolerance))


# ----------------------------------------------------------------------
# random instance
# ----------------------------------------------------------------------

def smooth_image(rng: np.random.Generator, width: int, height: int, waves: int = 4) -> np.ndarray:
    """Positive low-frequency colour field, so bilinear slopes vary slowly between cells"""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    image = np.full((height, width, 3), 0.5)
    for c in range(3):
        for _ in range(waves):
            kx, ky = rng.uniform(-1.0, 1.0, 2) * 2.0 * np.pi / max(width, height)
            image[:, :, c] += 0.08 * np.sin(kx * xs + ky * ys + rng.uniform(0.0, 2.0 * np.pi))
    return np.clip(image, 0.05, 0.95)


def randomize_layers(model: MultiLevelModel, rng: np.random.Generator, scale: float = 5e-3) -> MultiLevelModel:
    """Random corrective matrices and nonzero biases, keeping ReLU units away from their kink"""
    def perturbed(corrective):
        corr = corrective.copy()
        for k, layer in enumerate(corr.layers):
            layer.matrix[...] = scale * rng.standard_normal(layer.matrix.shape)
            hidden = k < len(corr.layers) - 1
            layer.bias[...] = (rng.uniform(0.2, 1.0, layer.bias.shape) * rng.choice([-1.0, 1.0], layer.bias.shape)
                               if hidden else scale * rng.standard_normal(layer.bias.shape))
        return corr
    return model.with_correctives(perturbed(model.geom_corr), perturbed(model.refl_corr))


def random_instance(model: MultiLevelModel, rng: np.random.Generator, K: CameraIntrinsics):
    """Random x near a frontal view plus an image and landmarks for it"""
    params = ParamVector.zeros(model)
    base = model.base
    params.alpha = 0.5 * base.sigma_g * rng.standard_normal(base.geometry_dim)
    params.beta = 0.5 * base.sigma_r * rng.standard_normal(base.m_r)
    params.delta_g = rng.standard_normal(model.corrective_dim)
    params.delta_r = rng.standard_normal(model.corrective_dim)
    params.omega = rng.uniform(-0.15, 0.15, 3)
    centroid = model.mean_vertices().mean(axis=0)
    params.t = np.array([-centroid[0], -centroid[1], 3.0 - centroid[2]]) + rng.uniform(-0.1, 0.1, 3)
    for gamma in (params.gamma_b, params.gamma_f):
        gamma[...] = 0.15 * rng.standard_normal(gamma.shape)
        gamma[0] = 1.0 / SH_C0 + 0.1 * rng.standard_normal(3)
    image = smooth_image(rng, K.width, K.height)

    state = render_state(model, params, K, Level.BASE)
    positions = state.pixels[model.topology.anchor_vertices] + rng.normal(0.0, 1.5, (len(model.topology.landmark_anchors), 2))
    lms = LandmarkSet.from_topology(positions, model.topology, confidences=rng.uniform(0.5, 1.0, len(positions)))
    return params, image, lms


def _sample(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    return np.arange(size) if size <= count else np.sort(rng.choice(size, count, replace=False))


def gradcheck(model: Optional[MultiLevelModel] = None, seed: int = 0, n_vertices: int = 500,
              dims: Sequence[int] = (8, 4, 8, 6), variant: CorrectiveVariant = CorrectiveVariant.LINEAR,
              image_size: int = 64, tolerance: float = DEFAULT_TOLERANCE, h: float = DEFAULT_STEP,
              floor: float = DEFAULT_FLOOR, theta_samples: int = 24,
              weights: Optional[Weights] = None) -> GradcheckReport:
    """
    Compare grad_total with finite differences on a random desk-scale instance.

    Every coordinate of x is checked; each corrective layer is checked on
    `theta_samples` random matrix entries and bias entries.
    """
    rng = np.random.default_rng(seed)
    if model is None:
        m_s, m_e, m_r, c = dims
        model = synth_model(seed, n_vertices, m_s, m_e, m_r, c, variant)
    model = randomize_layers(model, rng)
    K = CameraIntrinsics.default_for(image_size, image_size)
    params, image, lms = random_instance(model, rng, K)

    ctx = EnergyContext.create(model, image, K, weights or Weights.finetune(), lms, seed=seed)
    ctx = ctx.refreshed(params).frozen(params)

    _, analytic = grad_total(ctx, params, mode="train")
    numeric = finite_diff(lambda p: e_total(ctx, p).total, params, h, floor)

    report = GradcheckReport(seed=seed, tolerance=tolerance)
    for name in BLOCKS:
        report.blocks.append(compare(name, getattr(analytic, name), getattr(numeric, name), tolerance))

    for part, corrective, layer_grads in (("theta_g", model.geom_corr, analytic.theta_g),
                                          ("theta_r", model.refl_corr, analytic.theta_r)):
        coordinates = [{"matrix": _sample(rng, layer.matrix.size, theta_samples),
                        "bias": _sample(rng, layer.bias.size, theta_samples)} for layer in corrective.layers]
        fd_layers = finite_diff_layers(lambda: e_total(ctx, params).total, corrective.layers, h, floor,
                                       coordinates)
        for k, (ga, gn, coords) in enumerate(zip(layer_grads, fd_layers, coordinates)):
            for sub in ("matrix", "bias"):
                idx = coords[sub]
                report.blocks.append(compare(f"{part}[{k}].{sub[0]}", getattr(ga, sub).reshape(-1)[idx],
                                             getattr(gn, sub).reshape(-1)[idx], tolerance))

    level = "passed" if report.passed else "FAILED"
    logger.info(f"gradcheck seed={seed} N={model.vertex_count} {level}")
    return report
