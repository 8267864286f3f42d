"""Assembly of the complete energy over one image"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np

from facefit.energy.terms import (PhotoLevel, chroma_weights, e_glo, e_ref, e_smo, e_sparse, e_sta, e_std,
                                  photo_level, sample_glo_pairs)
from facefit.energy.weights import Weights
from facefit.exceptions import GradientError
from facefit.landmarks import LandmarkSet
from facefit.model.base_model import eval_base_geometry, eval_base_reflectance
from facefit.model.corrective import CorrectiveCache
from facefit.model.multilevel import MultiLevelModel, eval_final
from facefit.render.camera import CameraIntrinsics
from facefit.render.pipeline import Level, RenderState, render_geometry

TERMS = ("photo_base", "photo_final", "sparse", "std", "smo", "ref", "glo", "sta")


@dataclass(frozen=True)
class EnergyReport:
    photo_base: float
    photo_final: float
    sparse: float
    std: float
    smo: float
    ref: float
    glo: float
    sta: float
    data: float
    reg: float
    total: float

    @classmethod
    def assemble(cls, terms: Dict[str, float], weights: Weights) -> "EnergyReport":
        """E_data = E_sparse + w_photo E_photo, E_reg = sum of regularizers, E = E_data + w_reg E_reg"""
        data = terms["sparse"] + weights.w_photo * (terms["photo_base"] + terms["photo_final"])
        reg = terms["std"] + terms["smo"] + terms["ref"] + terms["glo"] + terms["sta"]
        return cls(data=data, reg=reg, total=data + weights.w_reg * reg, **terms)

    def weighted_terms(self, weights: Weights) -> Dict[str, float]:
        """Contribution of every term to the total"""
        out = {
            "photo_base": weights.w_photo * self.photo_base,
            "photo_final": weights.w_photo * self.photo_final,
            "sparse": self.sparse,
        }
        for name in ("std", "smo", "ref", "glo", "sta"):
            out[name] = weights.w_reg * getattr(self, name)
        return out

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in TERMS + ("data", "reg", "total")}

    @classmethod
    def from_dict(cls, data: dict) -> "EnergyReport":
        return cls(**{name: float(data[name]) for name in TERMS + ("data", "reg", "total")})


@dataclass(eq=False)
class EnergyContext:
    """
    Everything the energy depends on besides x (and Theta, carried by the model).

    Landmark correspondences, chroma weights, skin samples and, optionally,
    the visible sets are constants of the energy; the fitter refreshes them
    between iterations.
    """
    model: MultiLevelModel
    image: np.ndarray
    K: CameraIntrinsics
    weights: Weights
    glo_samples: np.ndarray
    landmarks: Optional[LandmarkSet] = None
    chroma: Optional[np.ndarray] = None
    visible_base: Optional[np.ndarray] = None
    visible_final: Optional[np.ndarray] = None

    @classmethod
    def create(cls, model: MultiLevelModel, image: np.ndarray, K: CameraIntrinsics, weights: Weights,
               landmarks: Optional[LandmarkSet] = None, seed: int = 0) -> "EnergyContext":
        return cls(model=model, image=np.asarray(image, dtype=float), K=K, weights=weights,
                   glo_samples=sample_glo_pairs(model.topology, seed), landmarks=landmarks)

    @property
    def active_landmarks(self) -> Optional[LandmarkSet]:
        return self.landmarks if self.weights.landmarks else None

    def refreshed(self, params, landmarks: Optional[LandmarkSet] = None) -> "EnergyContext":
        """Recompute chroma weights from `params` (the previous iterate)"""
        state = render_final(self.model, params, self.K)
        chroma = chroma_weights(self.image, state, self.model.topology, self.weights)
        return replace(self, chroma=chroma, landmarks=self.landmarks if landmarks is None else landmarks)

    def frozen(self, params) -> "EnergyContext":
        """Context with visible sets pinned to those at `params`"""
        tape = forward(self, params)
        return replace(self, visible_base=tape.base.visible.copy(), visible_final=tape.final.visible.copy())

    def chroma_or_default(self) -> np.ndarray:
        if self.chroma is None:
            return np.ones(len(self.model.topology.edges))
        return self.chroma


def render_final(model: MultiLevelModel, params, K: CameraIntrinsics) -> RenderState:
    vertices, reflectance = eval_final(model, params.alpha, params.beta, params.delta_g, params.delta_r)
    return render_geometry(vertices, reflectance, params.pose, params.gamma_f, model.topology, K, Level.FINAL)


@dataclass(eq=False)
class EnergyTape:
    """Intermediate values of one energy evaluation, reused by the backward pass"""
    params: object
    base: RenderState
    final: RenderState
    geom_field: np.ndarray
    refl_field: np.ndarray
    geom_cache: CorrectiveCache
    refl_cache: CorrectiveCache
    photo_base: PhotoLevel
    photo_final: Optional[PhotoLevel]
    chroma: np.ndarray
    report: Optional[EnergyReport] = None
    terms: Dict[str, float] = field(default_factory=dict)


def _with_visibility(state: RenderState, visible: Optional[np.ndarray]) -> RenderState:
    return state if visible is None else replace(state, visible=np.asarray(visible, dtype=bool))


def forward(ctx: EnergyContext, params) -> EnergyTape:
    """Evaluate both levels and every term, keeping what the gradient needs"""
    model, weights = ctx.model, ctx.weights
    base_model = model.base
    params.validate(model)

    v_base = eval_base_geometry(base_model, params.alpha)
    r_base = eval_base_reflectance(base_model, params.beta)
    geom_field, geom_cache = model.geom_corr.forward(np.asarray(params.delta_g, dtype=float))
    refl_field, refl_cache = model.refl_corr.forward(np.asarray(params.delta_r, dtype=float))

    pose = params.pose
    base = render_geometry(v_base, r_base, pose, params.gamma_b, model.topology, ctx.K, Level.BASE)
    final = render_geometry(v_base + geom_field, r_base + refl_field, pose, params.gamma_f,
                            model.topology, ctx.K, Level.FINAL)
    base = _with_visibility(base, ctx.visible_base)
    final = _with_visibility(final, ctx.visible_final)

    photo_b = photo_level(base, ctx.image, weights.eps_l21)
    photo_f = photo_level(final, ctx.image, weights.eps_l21) if weights.final_photo else None
    chroma = ctx.chroma_or_default()

    terms = {
        "photo_base": photo_b.value,
        "photo_final": photo_f.value if photo_f is not None else 0.0,
        "sparse": e_sparse(base, ctx.active_landmarks),
        "std": e_std(params.alpha, params.beta, base_model, weights),
        "smo": e_smo(geom_field, model.topology, weights),
        "ref": e_ref(final.reflectance, model.topology, chroma, weights),
        "glo": e_glo(final.reflectance, model.topology.skin_mask, ctx.glo_samples, weights),
        "sta": e_sta(geom_field, weights),
    }
    for name, value in terms.items():
        if not np.isfinite(value):
            raise GradientError(name, "non-finite energy term")

    tape = EnergyTape(params=params, base=base, final=final, geom_field=geom_field, refl_field=refl_field,
                      geom_cache=geom_cache, refl_cache=refl_cache, photo_base=photo_b, photo_final=photo_f,
                      chroma=chroma, terms=terms)
    tape.report = EnergyReport.assemble(terms, weights)
    return tape


def e_total(ctx: EnergyContext, params) -> EnergyReport:
    """Complete energy of x under the context's constants"""
    return forward(ctx, params).report
