"""CSV tables, energy plots, error histograms and preview strips"""

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from facefit.energy.total import TERMS  # noqa: E402
from facefit.model.multilevel import MultiLevelModel  # noqa: E402
from facefit.optim.fitter import FitResult  # noqa: E402
from facefit.optim.params import ParamVector  # noqa: E402
from facefit.optim.trainer import StudyRow, TrainingResult, summarize  # noqa: E402
from facefit.render.camera import CameraIntrinsics  # noqa: E402
from facefit.render.pipeline import Level  # noqa: E402
from facefit.render.rasterizer import illumination_sphere, rasterize_preview, reflectance_preview  # noqa: E402
from facefit.services.image_io import write_image  # noqa: E402
from facefit.utils.logging_setup import get_logger, log_run_event  # noqa: E402

logger = get_logger("services.report")

TRAJECTORY_COLUMNS = ("iteration", "stage") + TERMS + ("data", "reg", "total")


def write_trajectory_csv(result: FitResult, path: Union[str, Path]) -> Path:
    """One row per recorded energy evaluation"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_COLUMNS)
        for k, report in enumerate(result.trajectory):
            values = report.to_dict()
            writer.writerow([k, result.stage_of(k)] + [repr(float(values[name])) for name in TRAJECTORY_COLUMNS[2:]])
    return path


def plot_energy(result: FitResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    iterations = np.arange(len(result.trajectory))
    fig, (ax_total, ax_photo) = plt.subplots(1, 2, figsize=(11, 4))
    ax_total.semilogy(iterations, np.maximum(result.totals, 1e-300), label="total")
    ax_total.semilogy(iterations, np.maximum(result.best_so_far, 1e-300), "--", label="best so far")
    ax_total.semilogy(iterations, np.maximum([r.data for r in result.trajectory], 1e-300), label="data")
    for start in result.stage_starts.values():
        if start > 0:
            ax_total.axvline(start, color="gray", linestyle=":")
    ax_total.set_xlabel("iteration")
    ax_total.set_ylabel("energy")
    ax_total.legend()
    ax_photo.plot(iterations, [r.photo_base for r in result.trajectory], label="photo base")
    ax_photo.plot(iterations, [r.photo_final for r in result.trajectory], label="photo final")
    ax_photo.set_xlabel("iteration")
    ax_photo.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def error_histogram(base_errors: Sequence[float], final_errors: Sequence[float], bins: int = 10):
    """Shared-bin histograms of base and final photometric errors (finite values only)"""
    base = np.asarray([e for e in base_errors if np.isfinite(e)], dtype=float)
    final = np.asarray([e for e in final_errors if np.isfinite(e)], dtype=float)
    everything = np.concatenate([base, final])
    if len(everything) == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
    else:
        low, high = float(everything.min()), float(everything.max())
        edges = np.linspace(low, high if high > low else low + 1e-6, bins + 1)
    base_counts, _ = np.histogram(base, bins=edges)
    final_counts, _ = np.histogram(final, bins=edges)
    return edges, base_counts, final_counts


def plot_error_histogram(base_errors: Sequence[float], final_errors: Sequence[float],
                         path: Union[str, Path], bins: int = 10) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    edges, base_counts, final_counts = error_histogram(base_errors, final_errors, bins)
    base, final = summarize(base_errors), summarize(final_errors)
    centres = 0.5 * (edges[:-1] + edges[1:])
    width = 0.4 * (edges[1] - edges[0])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(centres - width / 2, base_counts, width, label=f"base (mean {base['mean']:.3f}, SD {base['sd']:.3f})")
    ax.bar(centres + width / 2, final_counts, width,
           label=f"final (mean {final['mean']:.3f}, SD {final['sd']:.3f})")
    ax.set_xlabel("photometric error")
    ax.set_ylabel("images")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def training_record(result: TrainingResult) -> dict:
    """JSON form of a training run: per-image errors, skipped images, batch log and summary"""
    return {
        "names": list(result.names),
        "base_errors": [float(e) for e in result.base_errors],
        "final_errors": [float(e) for e in result.final_errors],
        "skipped": list(result.skipped),
        "log": list(result.log),
        "summary": result.summary(),
    }


def write_training_csv(record: dict, path: Union[str, Path]) -> Path:
    """Per-image base and final photometric error"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    skipped = set(record["skipped"])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("image", "photo_base", "photo_final", "skipped"))
        for name, base, final in zip(record["names"], record["base_errors"], record["final_errors"]):
            writer.writerow((name, repr(float(base)), repr(float(final)), int(name in skipped)))
    return path


def write_training_log_csv(log: List[dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("step", "epoch", "mean_total", "batch"))
        for entry in log:
            writer.writerow((entry["step"], entry["epoch"], repr(float(entry["mean_total"])),
                             " ".join(entry["batch"])))
    return path


def write_study_csv(rows: Sequence[StudyRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ("variant", "C", "images", "base_mean", "base_sd", "final_mean", "final_sd")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            data = row.to_dict()
            writer.writerow([data[c] for c in columns])
    return path


def plot_study(rows: Sequence[StudyRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    by_variant: Dict[str, List[StudyRow]] = {}
    for row in rows:
        by_variant.setdefault(row.variant, []).append(row)
    for variant, group in by_variant.items():
        group = sorted(group, key=lambda r: r.C)
        ax.errorbar([r.C for r in group], [r.final_mean for r in group], yerr=[r.final_sd for r in group],
                    marker="o", capsize=3, label=f"{variant} final")
    if rows:
        ax.axhline(rows[0].base_mean, color="gray", linestyle="--", label="base")
    ax.set_xlabel("corrective dimension C")
    ax.set_ylabel("mean photometric error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def preview_strip(model: MultiLevelModel, params: ParamVector, image: np.ndarray, K: CameraIntrinsics,
                  path: Optional[Union[str, Path]] = None) -> np.ndarray:
    """input | base over input | final over input | final reflectance | illumination sphere"""
    panels = [
        np.asarray(image, dtype=float),
        rasterize_preview(model, params, K, Level.BASE, background=image),
        rasterize_preview(model, params, K, Level.FINAL, background=image),
        reflectance_preview(model, params, K, Level.FINAL),
        illumination_sphere(params.gamma_f, K.height),
    ]
    gap = np.ones((K.height, 2, 3))
    pieces = []
    for panel in panels:
        pieces.extend([panel, gap])
    strip = np.concatenate(pieces[:-1], axis=1)
    if path is not None:
        write_image(path, strip)
    return strip


def report_fit(result: FitResult, out_dir: Union[str, Path], model: Optional[MultiLevelModel] = None,
               image: Optional[np.ndarray] = None, K: Optional[CameraIntrinsics] = None) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    written = {
        "csv": write_trajectory_csv(result, out_dir / "trajectory.csv"),
        "energy": plot_energy(result, out_dir / "energy.png"),
    }
    if model is not None and image is not None and K is not None:
        preview_strip(model, result.params, image, K, out_dir / "preview.png")
        written["preview"] = out_dir / "preview.png"
    log_run_event("services.report", f"fit report written to {out_dir}")
    return written


def report_training(record: Union[TrainingResult, dict], out_dir: Union[str, Path],
                    bins: int = 10) -> Dict[str, Path]:
    if isinstance(record, TrainingResult):
        record = training_record(record)
    out_dir = Path(out_dir)
    written = {
        "errors": write_training_csv(record, out_dir / "errors.csv"),
        "log": write_training_log_csv(record["log"], out_dir / "training_log.csv"),
        "histogram": plot_error_histogram(record["base_errors"], record["final_errors"], out_dir / "errors.png",
                                          bins),
    }
    base, final = summarize(record["base_errors"]), summarize(record["final_errors"])
    logger.info(f"photometric error base mean {base['mean']:.4f} SD {base['sd']:.4f}, "
                f"final mean {final['mean']:.4f} SD {final['sd']:.4f}")
    return written


def report_study(rows: Sequence[StudyRow], out_dir: Union[str, Path]) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    written = {"csv": write_study_csv(rows, out_dir / "study.csv"), "plot": plot_study(rows, out_dir / "study.png")}
    log_run_event("services.report", f"study of {len(rows)} run(s) written to {out_dir}")
    return written
