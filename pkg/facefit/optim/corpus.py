"""Synthetic training corpora with structure the base model cannot express"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from facefit.energy.terms import photometric_error
from facefit.exceptions import ConfigError
from facefit.landmarks import LandmarkSet, read_landmarks, write_landmarks
from facefit.model.base_model import eval_base_geometry, eval_base_reflectance
from facefit.model.multilevel import MultiLevelModel
from facefit.optim.fitter import initial_pose
from facefit.optim.params import ParamVector
from facefit.render.camera import CameraIntrinsics
from facefit.render.lighting import SH_C0
from facefit.render.pipeline import Level, RenderState, render_geometry
from facefit.render.rasterizer import bleed_background, rasterize_state
from facefit.services.image_io import from_bytes, read_image, to_bytes, write_image
from facefit.services.result_store import load_json, save_json
from facefit.utils.logging_setup import get_logger, log_diagnostic, log_run_event

logger = get_logger("optim.corpus")

MANIFEST = "manifest.json"


def _unit_directions(model: MultiLevelModel) -> np.ndarray:
    mean = model.mean_vertices()
    centred = mean - mean.mean(axis=0)
    return centred / np.linalg.norm(centred, axis=1, keepdims=True)


def _falloff(model: MultiLevelModel, direction, radius: float) -> np.ndarray:
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    cos = np.clip(_unit_directions(model) @ direction, -1.0, 1.0)
    angle = np.arccos(cos)
    return np.exp(-angle ** 2 / (2.0 * radius ** 2))


@dataclass(frozen=True)
class BumpSpec:
    """Smooth outward swelling around a direction from the head centre (a cheek by default)"""
    direction: Tuple[float, float, float] = (0.45, 0.05, -0.89)
    radius: float = 0.25
    height: float = 0.08

    def displacement(self, model: MultiLevelModel) -> np.ndarray:
        weight = self.height * _falloff(model, self.direction, self.radius)
        return (weight[:, None] * _unit_directions(model)).reshape(-1)


@dataclass(frozen=True)
class PatchSpec:
    """Darkened reflectance region (a beard-like chin patch by default)"""
    direction: Tuple[float, float, float] = (0.0, 0.75, -0.66)
    radius: float = 0.3
    darkening: float = 0.45

    def offsets(self, model: MultiLevelModel) -> np.ndarray:
        weight = self.darkening * _falloff(model, self.direction, self.radius)
        return (-weight[:, None] * model.base.a_r.reshape(-1, 3)).reshape(-1)


@dataclass(eq=False)
class CorpusItem:
    name: str
    image: np.ndarray
    landmarks: Optional[LandmarkSet] = None
    truth: Optional[ParamVector] = None


@dataclass(eq=False)
class Corpus:
    items: List[CorpusItem]
    K: CameraIntrinsics
    root: Optional[Path] = None
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[CorpusItem]:
        return iter(self.items)


def out_of_base_fraction(model: MultiLevelModel, displacement: np.ndarray) -> float:
    """Norm of the part of a 3N field outside span(B_g), relative to the field's norm"""
    coefficients, *_ = np.linalg.lstsq(model.base.B_g, displacement, rcond=None)
    residual = displacement - model.base.B_g @ coefficients
    return float(np.linalg.norm(residual) / max(np.linalg.norm(displacement), 1e-300))


def sample_truth(model: MultiLevelModel, rng: np.random.Generator, K: CameraIntrinsics) -> ParamVector:
    """Random in-base coefficients, a moderate head pose and mostly frontal coloured light"""
    base = model.base
    params = ParamVector.zeros(model)
    params.alpha = 0.6 * base.sigma_g * rng.standard_normal(base.geometry_dim)
    params.beta = 0.6 * base.sigma_r * rng.standard_normal(base.m_r)
    params.omega = np.array([rng.uniform(-0.12, 0.12), rng.uniform(-0.3, 0.3), rng.uniform(-0.08, 0.08)])
    pose = initial_pose(model, K)
    params.t = pose.t + np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.3, 0.3)])
    gamma = np.zeros((9, 3))
    gamma[0] = (1.0 + 0.08 * rng.standard_normal(3)) / SH_C0
    gamma[1:4] = 0.12 * rng.standard_normal((3, 1)) / SH_C0 + 0.01 * rng.standard_normal((3, 3))
    gamma[2] = -np.abs(gamma[2])
    gamma[4:] = 0.05 * rng.standard_normal((5, 3)) / SH_C0
    params.gamma_b = gamma
    params.gamma_f = gamma.copy()
    return params


def render_sample(model: MultiLevelModel, params: ParamVector, K: CameraIntrinsics,
                  geometry_offset: Optional[np.ndarray] = None, reflectance_offset: Optional[np.ndarray] = None,
                  bleed: bool = True) -> Tuple[np.ndarray, RenderState]:
    """Rasterized image of base-level params plus fixed out-of-base offsets"""
    vertices = eval_base_geometry(model.base, params.alpha)
    reflectance = eval_base_reflectance(model.base, params.beta)
    if geometry_offset is not None:
        vertices = vertices + geometry_offset
    if reflectance_offset is not None:
        reflectance = reflectance + reflectance_offset
    state = render_geometry(vertices, reflectance, params.pose, params.gamma_b, model.topology, K, Level.BASE)
    raster = rasterize_state(state, model.topology, K)
    image = bleed_background(raster) if bleed else raster.image
    return np.clip(image, 0.0, 1.0), state


def synth_corpus(model: MultiLevelModel, out_dir: Union[str, Path], seed: int, count: int,
                 K: Optional[CameraIntrinsics] = None, bump: Optional[BumpSpec] = BumpSpec(),
                 patch: Optional[PatchSpec] = PatchSpec(), bleed: bool = True,
                 image_size: int = 64) -> Corpus:
    """
    Render `count` images and write images/, landmarks/, gt/ and manifest.json.

    Landmarks are the projected anchors of the rendered (bumped) geometry with
    confidence 1.
    """
    if count < 1:
        raise ConfigError("corpus count must be >= 1")
    K = K or CameraIntrinsics.default_for(image_size, image_size)
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    geometry_offset = bump.displacement(model) if bump is not None else None
    reflectance_offset = patch.offsets(model) if patch is not None else None
    if geometry_offset is not None:
        logger.info(f"bump lies {100 * out_of_base_fraction(model, geometry_offset):.1f}% outside the "
                    f"geometry basis")

    items, names = [], []
    for index in range(count):
        name = f"{index:05d}"
        truth = sample_truth(model, rng, K)
        image, state = render_sample(model, truth, K, geometry_offset, reflectance_offset, bleed)
        image = from_bytes(to_bytes(image))  # what a reader of the PNG sees
        if not state.visible.any():
            log_diagnostic("optim.corpus", f"{name}: face not visible, image kept for completeness")
        lms = LandmarkSet.from_topology(state.pixels[model.topology.anchor_vertices], model.topology)
        write_image(out_dir / "images" / f"{name}.png", image)
        write_landmarks(out_dir / "landmarks" / f"{name}.lms", lms,
                        header=[f"synthetic corpus seed {seed}, image {name}", "x y confidence kind anchor"])
        save_json({"params": truth.to_dict(), "photometric_error": photometric_error(state, image)},
                  out_dir / "gt" / f"{name}.json")
        items.append(CorpusItem(name, image, lms, truth))
        names.append(name)

    manifest = {
        "count": count,
        "seed": seed,
        "model_seed": model.seed,
        "intrinsics": K.to_dict(),
        "bump": asdict(bump) if bump is not None else None,
        "patch": asdict(patch) if patch is not None else None,
        "bleed": bleed,
        "images": names,
    }
    save_json(manifest, out_dir / MANIFEST)
    log_run_event("optim.corpus", f"wrote {count} image(s) to {out_dir}")
    return Corpus(items, K, out_dir, manifest)


def load_corpus(root: Union[str, Path], model: Optional[MultiLevelModel] = None) -> Corpus:
    """Read a corpus directory; landmarks and ground truth are optional per image"""
    root = Path(root)
    manifest_path = root / MANIFEST
    if not manifest_path.exists():
        raise ConfigError(f"corpus manifest not found: {manifest_path}")
    manifest = load_json(manifest_path)
    K = CameraIntrinsics.from_dict(manifest["intrinsics"])
    topology = model.topology if model is not None else None

    items = []
    for name in manifest.get("images", []):
        image = read_image(root / "images" / f"{name}.png")
        if image.shape[:2] != (K.height, K.width):
            raise ConfigError(f"{name}: image size does not match the corpus intrinsics")
        lms_path = root / "landmarks" / f"{name}.lms"
        lms = read_landmarks(lms_path, topology) if lms_path.exists() else None
        gt_path = root / "gt" / f"{name}.json"
        truth = ParamVector.from_dict(load_json(gt_path)["params"]) if gt_path.exists() else None
        items.append(CorpusItem(name, image, lms, truth))
    if not items:
        raise ConfigError(f"corpus {root} lists no images")
    logger.info(f"loaded corpus of {len(items)} image(s) from {root}")
    return Corpus(items, K, root, manifest)
