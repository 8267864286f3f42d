"""Multi-level face model"""

from facefit.model.base_model import BaseModel, eval_base_geometry, eval_base_reflectance
from facefit.model.corrective import AffineLayer, CorrectiveMap, CorrectiveVariant, eval_corrective
from facefit.model.multilevel import MultiLevelModel, eval_final
from facefit.model.synth import reinitialize_correctives, synth_model
from facefit.model.topology import AnchorKind, LandmarkAnchor, MeshTopology

__all__ = [
    'AffineLayer', 'AnchorKind', 'BaseModel', 'CorrectiveMap', 'CorrectiveVariant', 'LandmarkAnchor',
    'MeshTopology', 'MultiLevelModel', 'eval_base_geometry', 'eval_base_reflectance', 'eval_corrective',
    'eval_final', 'reinitialize_correctives', 'synth_model',
]
