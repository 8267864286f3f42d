"""Per-image fitting with the two-stage AdaDelta schedule"""

import time
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from facefit.energy.terms import photometric_error
from facefit.energy.total import EnergyContext, EnergyReport
from facefit.energy.weights import STAGES, Weights
from facefit.exceptions import ConfigError, DivergenceError
from facefit.landmarks import LandmarkSet, update_sliding_indices
from facefit.model.multilevel import MultiLevelModel
from facefit.optim.adadelta import EPSILON, RHO, AdaDelta
from facefit.optim.gradients import evaluate_with_gradient
from facefit.optim.params import BASE_BLOCKS, BLOCKS, GradientVector, ParamVector
from facefit.render.camera import CameraIntrinsics, Pose
from facefit.render.image import sample_image_with_gradient
from facefit.render.lighting import SH_C0
from facefit.render.pipeline import Level, render_geometry, render_state
from facefit.utils.logging_setup import get_logger, log_diagnostic, log_error_with_context, log_run_event

logger = get_logger("optim.fitter")

# Fraction of the image height covered by the mean face at the initial pose
FACE_SPAN = 0.6


@dataclass(frozen=True)
class Schedule:
    stage: str = "finetune"
    pretrain_iterations: int = 2000
    finetune_iterations: int = 3000
    pretrain_lr: float = 0.01
    lr_base: float = 0.001
    lr_geom: float = 0.005
    lr_refl: float = 0.01
    # Multiplies every rate; AdaDelta moves ~sqrt(eps) per step at lr 1
    lr_gain: float = 100.0
    # Extra factor on the corrective layers only
    corrective_boost: float = 1.0
    batch_size: int = 5
    seed: int = 0
    rho: float = RHO
    eps: float = EPSILON
    divergence_factor: float = 1e6
    log_every: int = 100
    pretrain_weights: Weights = field(default_factory=Weights.pretrain)
    finetune_weights: Weights = field(default_factory=Weights.finetune)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage '{self.stage}'")
        if self.pretrain_iterations < 0 or self.finetune_iterations < 0:
            raise ConfigError("iteration counts must be >= 0")
        for name in ("pretrain_lr", "lr_base", "lr_geom", "lr_refl", "lr_gain", "corrective_boost",
                     "divergence_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")

    @property
    def total_iterations(self) -> int:
        return self.pretrain_iterations + (self.finetune_iterations if self.stage == "finetune" else 0)

    def pretrain_rates(self) -> Dict[str, float]:
        return {name: self.pretrain_lr * self.lr_gain for name in BASE_BLOCKS}

    def finetune_rates(self) -> Dict[str, float]:
        rates = {name: self.lr_base * self.lr_gain for name in BLOCKS}
        rates["delta_g"] = self.lr_geom * self.lr_gain
        rates["delta_r"] = self.lr_refl * self.lr_gain
        return rates

    def corrective_rates(self) -> Dict[str, float]:
        """Per-image blocks updated while training the correctives"""
        return {"gamma_f": self.lr_base * self.lr_gain,
                "delta_g": self.lr_geom * self.lr_gain,
                "delta_r": self.lr_refl * self.lr_gain}

    def theta_rate(self, part: str) -> float:
        lr = self.lr_geom if part == "theta_g" else self.lr_refl
        return lr * self.corrective_boost * self.lr_gain

    def with_ablation(self, terms) -> "Schedule":
        terms = list(terms)
        if not terms:
            return self
        return replace(self, pretrain_weights=self.pretrain_weights.ablate(terms),
                       finetune_weights=self.finetune_weights.ablate(terms))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.to_dict() if isinstance(value, Weights) else value
        return out


@dataclass(eq=False)
class FitResult:
    params: ParamVector
    trajectory: List[EnergyReport]
    photo_base: float
    photo_final: float
    sliding_history: List[np.ndarray] = field(default_factory=list)
    stage_starts: Dict[str, int] = field(default_factory=dict)
    wall_clock: float = 0.0
    landmarks: Optional[LandmarkSet] = None

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.trajectory])

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.totals)

    def stage_of(self, iteration: int) -> str:
        stage = "pretrain"
        for name, start in sorted(self.stage_starts.items(), key=lambda item: item[1]):
            if iteration >= start:
                stage = name
        return stage

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "trajectory": [r.to_dict() for r in self.trajectory],
            "photometric_error": {"base": self.photo_base, "final": self.photo_final},
            "sliding_history": [h.tolist() for h in self.sliding_history],
            "stage_starts": dict(self.stage_starts),
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        errors = data.get("photometric_error", {})
        return cls(params=ParamVector.from_dict(data["params"]),
                   trajectory=[EnergyReport.from_dict(r) for r in data["trajectory"]],
                   photo_base=float(errors.get("base", float("nan"))),
                   photo_final=float(errors.get("final", float("nan"))),
                   sliding_history=[np.asarray(h, dtype=np.int64) for h in data.get("sliding_history", [])],
                   stage_starts={k: int(v) for k, v in data.get("stage_starts", {}).items()},
                   wall_clock=float(data.get("wall_clock", 0.0)))


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------

def initial_pose(model: MultiLevelModel, K: CameraIntrinsics) -> Pose:
    """Mean-face centroid on the optical axis, deep enough to span FACE_SPAN of the image height"""
    mean = model.mean_vertices()
    centroid = mean.mean(axis=0)
    height = float(np.ptp(mean[:, 1]))
    depth = K.focal_px * height / (FACE_SPAN * K.height)
    return Pose(np.zeros(3), np.array([-centroid[0], -centroid[1], depth - centroid[2]]))


def init_params(model: MultiLevelModel, image: np.ndarray, K: CameraIntrinsics) -> ParamVector:
    """
    Canonical start: zero coefficients, frontal pose, and gray ambient light
    scaled so the mean shaded colour matches the mean image intensity.
    """
    params = ParamVector.zeros(model)
    pose = initial_pose(model, K)
    params.omega, params.t = pose.omega, pose.t

    unit = np.zeros((9, 3))
    unit[0] = 1.0
    albedo = model.base.a_r.reshape(-1, 3)
    state = render_geometry(model.mean_vertices(), albedo, pose, unit, model.topology, K, Level.BASE)
    visible = state.visible_indices
    gain = 1.0 / SH_C0
    if len(visible) == 0:
        log_diagnostic("optim.fitter", "mean face not visible at the initial pose; using unit light")
    else:
        observed = float(np.mean(sample_image_with_gradient(image, state.pixels[visible]).colors))
        reflect = float(np.mean(albedo[visible]))
        if reflect > 0:
            gain = observed / (reflect * SH_C0)
    params.gamma_b[0] = gain
    params.gamma_f = params.gamma_b.copy()
    return params


# ----------------------------------------------------------------------
# optimization
# ----------------------------------------------------------------------

def evaluate_iteration(ctx: EnergyContext, params: ParamVector,
                       mode: str = "fit") -> Tuple[EnergyContext, EnergyReport, GradientVector]:
    """Refresh sliding correspondences and chroma weights at `params`, then evaluate E and its gradient"""
    lms = ctx.landmarks
    if lms is not None:
        base_state = render_state(ctx.model, params, ctx.K, Level.BASE)
        lms = update_sliding_indices(base_state, lms, ctx.model.topology, ctx.K)
    ctx = ctx.refreshed(params, lms)
    report, grad = evaluate_with_gradient(ctx, params, mode)
    return ctx, report, grad


@dataclass
class _Trace:
    trajectory: List[EnergyReport] = field(default_factory=list)
    sliding: List[np.ndarray] = field(default_factory=list)

    def record(self, ctx: EnergyContext, report: EnergyReport) -> None:
        self.trajectory.append(report)
        if ctx.landmarks is not None:
            self.sliding.append(ctx.landmarks.anchors[ctx.landmarks.sliding_mask].copy())


def _check_divergence(report: EnergyReport, reference: float, schedule: Schedule, trace: _Trace,
                      where: str) -> None:
    if report.total > schedule.divergence_factor * max(reference, 1e-12):
        totals = [r.total for r in trace.trajectory]
        error = DivergenceError(f"{where}: energy {report.total:.6g} exceeds {schedule.divergence_factor:g} x "
                                f"{reference:.6g}", totals)
        log_error_with_context("optim.fitter", f"divergence, trajectory={totals}", error)
        raise error


def optimize_stage(ctx: EnergyContext, params: ParamVector, rates: Dict[str, float], iterations: int,
                   schedule: Schedule, stage: str, trace: _Trace,
                   record_start: bool) -> Tuple[ParamVector, EnergyContext]:
    """
    Run `iterations` AdaDelta steps on the blocks named in `rates`.

    Returns the best evaluated parameters of the stage and the context
    (landmark correspondences) in force there.
    """
    optimizer = AdaDelta(rates, schedule.rho, schedule.eps)
    params = params.copy()
    ctx, report, grad = evaluate_iteration(ctx, params)
    if record_start:
        trace.record(ctx, report)
    reference = report.total
    best, best_total, best_ctx = params.copy(), report.total, ctx

    for k in range(1, iterations + 1):
        optimizer.update(params, grad)
        ctx, report, grad = evaluate_iteration(ctx, params)
        trace.record(ctx, report)
        _check_divergence(report, reference, schedule, trace, f"{stage} iteration {k}")
        if report.total < best_total:
            best, best_total, best_ctx = params.copy(), report.total, ctx
        if k % schedule.log_every == 0 or k == iterations:
            logger.info(f"{stage} {k}/{iterations} E={report.total:.6g} data={report.data:.6g} "
                        f"reg={report.reg:.6g} photo_b={report.photo_base:.5g} photo_f={report.photo_final:.5g}")
        else:
            logger.debug(f"{stage} {k}/{iterations} E={report.total:.6g}")
    return best, best_ctx


def fit_image(model: MultiLevelModel, image: np.ndarray, landmarks: Optional[LandmarkSet],
              K: CameraIntrinsics, schedule: Schedule = Schedule()) -> FitResult:
    """
    Stage 1 fits (alpha, beta, omega, t, gamma_b) on the base level; stage 2
    (finetune only) fits all of x with the correctives held fixed.
    """
    start = time.perf_counter()
    if landmarks is None:
        logger.warning("no landmarks given; landmark term dropped")
    else:
        landmarks.validate(model.topology)
    image = np.asarray(image, dtype=float)
    if image.shape[:2] != (K.height, K.width):
        raise ConfigError(f"image is {image.shape[1]}x{image.shape[0]}, intrinsics expect {K.width}x{K.height}")

    trace = _Trace()
    stage_starts = {"pretrain": 0}
    params = init_params(model, image, K)
    ctx = EnergyContext.create(model, image, K, schedule.pretrain_weights, landmarks, seed=schedule.seed)

    log_run_event("optim.fitter", f"pretrain: {schedule.pretrain_iterations} iterations")
    params, ctx = optimize_stage(ctx, params, schedule.pretrain_rates(), schedule.pretrain_iterations,
                                 schedule, "pretrain", trace, record_start=True)
    params.gamma_f = params.gamma_b.copy()

    if schedule.stage == "finetune":
        stage_starts["finetune"] = schedule.pretrain_iterations + 1
        log_run_event("optim.fitter", f"finetune: {schedule.finetune_iterations} iterations")
        ctx = replace(ctx, weights=schedule.finetune_weights)
        params, ctx = optimize_stage(ctx, params, schedule.finetune_rates(), schedule.finetune_iterations,
                                     schedule, "finetune", trace, record_start=False)

    photo_base = photometric_error(render_state(model, params, K, Level.BASE), image)
    photo_final = photometric_error(render_state(model, params, K, Level.FINAL), image)
    elapsed = time.perf_counter() - start
    log_run_event("optim.fitter", f"fit done in {elapsed:.1f}s: photometric error base={photo_base:.4f} "
                                  f"final={photo_final:.4f}")
    return FitResult(params=params, trajectory=trace.trajectory, photo_base=photo_base, photo_final=photo_final,
                     sliding_history=trace.sliding, stage_starts=stage_starts, wall_clock=elapsed,
                     landmarks=ctx.landmarks)
