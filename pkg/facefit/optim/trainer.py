"""Joint learning of the corrective layers over an image corpus"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

from facefit.energy.terms import photometric_error
from facefit.energy.total import EnergyContext
from facefit.exceptions import ConfigError, DivergenceError
from facefit.model.corrective import CorrectiveVariant
from facefit.model.multilevel import MultiLevelModel
from facefit.model.synth import reinitialize_correctives
from facefit.optim.adadelta import AdaDelta
from facefit.optim.fitter import FitResult, Schedule, evaluate_iteration, fit_image
from facefit.optim.params import ParamVector, sum_layer_grads
from facefit.render.camera import CameraIntrinsics
from facefit.render.pipeline import Level, render_state
from facefit.services.config_service import thread_limit
from facefit.utils.logging_setup import get_logger, log_diagnostic, log_error_with_context, log_run_event

logger = get_logger("optim.trainer")

T = TypeVar("T")


def ordered_map(fn: Callable[..., T], items: Sequence, workers: Optional[int] = None) -> List[T]:
    """Apply fn to every item, possibly concurrently, returning results in input order"""
    workers = thread_limit() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def summarize(errors: Sequence[float]) -> dict:
    values = np.asarray([e for e in errors if np.isfinite(e)], dtype=float)
    if len(values) == 0:
        return {"mean": float("nan"), "sd": float("nan"), "count": 0}
    return {"mean": float(values.mean()), "sd": float(values.std()), "count": int(len(values))}


@dataclass(eq=False)
class TrainingResult:
    model: MultiLevelModel
    names: List[str]
    params: List[ParamVector]
    base_errors: np.ndarray
    final_errors: np.ndarray
    skipped: List[str] = field(default_factory=list)
    log: List[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "variant": self.model.variant.value,
            "C": self.model.corrective_dim,
            "images": len(self.names),
            "skipped": list(self.skipped),
            "base": summarize(self.base_errors),
            "final": summarize(self.final_errors),
        }


def fit_base_all(model: MultiLevelModel, corpus, K: CameraIntrinsics, schedule: Schedule,
                 workers: Optional[int] = None, progress: bool = False) -> List[FitResult]:
    """Stage 1 on every image independently"""
    pretrain = replace(schedule, stage="pretrain")
    items = list(corpus)
    log_run_event("optim.trainer", f"base fits for {len(items)} image(s)")
    bar = tqdm(total=len(items), desc="base fits", disable=not progress)

    def run(item):
        result = fit_image(model, item.image, item.landmarks, K, pretrain)
        bar.update(1)
        return result

    try:
        return ordered_map(run, items, workers)
    finally:
        bar.close()


def _errors(model: MultiLevelModel, params: ParamVector, image: np.ndarray, K: CameraIntrinsics):
    return (photometric_error(render_state(model, params, K, Level.BASE), image),
            photometric_error(render_state(model, params, K, Level.FINAL), image))


def train_correctives(model: MultiLevelModel, corpus, K: CameraIntrinsics, schedule: Schedule = Schedule(),
                      base_results: Optional[List[FitResult]] = None, workers: Optional[int] = None,
                      progress: bool = False) -> TrainingResult:
    """
    Two-stage corpus training.

    Stage 1 fits every image's base parameters. Stage 2 walks shuffled batches;
    each step updates the batch images' (delta_g, delta_r, gamma_f) and then
    the shared layers with the batch-mean gradient, in image order.
    """
    items = list(corpus)
    if not items:
        raise ConfigError("corpus is empty")
    names = [item.name for item in items]
    if base_results is None:
        base_results = fit_base_all(model, items, K, schedule, workers, progress)

    model = model.with_correctives(model.geom_corr.copy(), model.refl_corr.copy())
    params = [r.params.copy() for r in base_results]
    for p in params:
        p.gamma_f = p.gamma_b.copy()
        p.delta_g = np.zeros(model.corrective_dim)
        p.delta_r = np.zeros(model.corrective_dim)

    active, skipped = [], []
    for i, item in enumerate(items):
        if render_state(model, params[i], K, Level.BASE).visible.any():
            active.append(i)
        else:
            log_diagnostic("optim.trainer", f"{item.name}: no visible vertex after the base fit; skipped")
            skipped.append(item.name)

    log: List[dict] = []
    if schedule.stage == "finetune" and model.corrective_dim > 0 and active and schedule.finetune_iterations > 0:
        log = _finetune(model, items, params, active, K, schedule, base_results, workers, progress)
    elif model.corrective_dim == 0:
        log_run_event("optim.trainer", "C = 0: correctives disabled, final level equals base level")

    base_errors, final_errors = np.full(len(items), np.nan), np.full(len(items), np.nan)
    for i in active:
        base_errors[i], final_errors[i] = _errors(model, params[i], items[i].image, K)
    result = TrainingResult(model, names, params, base_errors, final_errors, skipped, log)
    summary = result.summary()
    log_run_event("optim.trainer", f"trained {summary['variant']} C={summary['C']}: photometric error "
                                   f"base {summary['base']['mean']:.4f} final {summary['final']['mean']:.4f}")
    return result


def _finetune(model: MultiLevelModel, items, params: List[ParamVector], active: List[int], K: CameraIntrinsics,
              schedule: Schedule, base_results: List[FitResult], workers, progress: bool) -> List[dict]:
    weights = schedule.finetune_weights
    contexts = {i: EnergyContext.create(model, items[i].image, K, weights,
                                        base_results[i].landmarks or items[i].landmarks, seed=schedule.seed)
                for i in active}
    optimizers = {i: AdaDelta(schedule.corrective_rates(), schedule.rho, schedule.eps) for i in active}
    layers = {"theta_g": model.geom_corr.layers, "theta_r": model.refl_corr.layers}
    theta_rates = {f"{part}.{k}.{sub}": schedule.theta_rate(part)
                   for part, group in layers.items() for k in range(len(group)) for sub in ("matrix", "bias")}
    theta_opt = AdaDelta(theta_rates, schedule.rho, schedule.eps)

    rng = np.random.default_rng(schedule.seed)
    queue: List[int] = []
    epoch = 0
    log: List[dict] = []
    reference = None

    def evaluate(i: int):
        return evaluate_iteration(contexts[i], params[i], mode="train")

    log_run_event("optim.trainer", f"finetune: {schedule.finetune_iterations} batch step(s), "
                                   f"batch size {schedule.batch_size}")
    for step in tqdm(range(1, schedule.finetune_iterations + 1), desc="finetune", disable=not progress):
        if not queue:
            queue = [active[j] for j in rng.permutation(len(active))]
            epoch += 1
        batch, queue = queue[:schedule.batch_size], queue[schedule.batch_size:]

        results = ordered_map(evaluate, batch, workers)
        totals = []
        for i, (ctx, report, grad) in zip(batch, results):
            contexts[i] = ctx
            optimizers[i].update(params[i], grad)
            totals.append(report.total)

        scale = 1.0 / len(batch)
        for part in ("theta_g", "theta_r"):
            mean_grad = sum_layer_grads([getattr(grad, part) for _, _, grad in results], scale)
            for k, (layer, g) in enumerate(zip(layers[part], mean_grad)):
                layer.matrix[...] = theta_opt.step(f"{part}.{k}.matrix", layer.matrix, g.matrix)
                layer.bias[...] = theta_opt.step(f"{part}.{k}.bias", layer.bias, g.bias)

        mean_total = float(np.mean(totals))
        if reference is None:
            reference = mean_total
        entry = {"step": step, "epoch": epoch, "batch": [items[i].name for i in batch], "mean_total": mean_total}
        log.append(entry)
        if mean_total > schedule.divergence_factor * max(reference, 1e-12):
            error = DivergenceError(f"training step {step}: mean energy {mean_total:.6g} diverged",
                                    [e["mean_total"] for e in log])
            log_error_with_context("optim.trainer", "divergence while training correctives", error)
            raise error
        if step % schedule.log_every == 0:
            logger.info(f"finetune step {step}/{schedule.finetune_iterations} epoch {epoch} "
                        f"mean E={mean_total:.6g}")
    return log


@dataclass
class StudyRow:
    variant: str
    C: int
    images: int
    base_mean: float
    base_sd: float
    final_mean: float
    final_sd: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_study(model: MultiLevelModel, corpus, K: CameraIntrinsics, schedule: Schedule,
              dims: Sequence[int], variants: Sequence[CorrectiveVariant] = (CorrectiveVariant.LINEAR,),
              hidden_dim: Optional[int] = None, workers: Optional[int] = None,
              progress: bool = False) -> List[StudyRow]:
    """Train fresh correctives for every (variant, C) on shared base fits"""
    items = list(corpus)
    base_results = fit_base_all(model, items, K, schedule, workers, progress)
    rows = []
    for variant in variants:
        for c in dims:
            trial = reinitialize_correctives(model, variant, int(c), schedule.seed, hidden_dim)
            result = train_correctives(trial, items, K, schedule, base_results, workers, progress)
            summary = result.summary()
            rows.append(StudyRow(variant.value, int(c), summary["final"]["count"],
                                 summary["base"]["mean"], summary["base"]["sd"],
                                 summary["final"]["mean"], summary["final"]["sd"]))
    return rows
