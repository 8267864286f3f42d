"""Multi-level face model: base level plus learned correctives"""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from facefit.exceptions import InvalidModelError
from facefit.model.base_model import BaseModel, eval_base_geometry, eval_base_reflectance
from facefit.model.corrective import CorrectiveMap, CorrectiveVariant, eval_corrective
from facefit.model.topology import MeshTopology


@dataclass(eq=False)
class MultiLevelModel:
    topology: MeshTopology
    base: BaseModel
    geom_corr: CorrectiveMap
    refl_corr: CorrectiveMap
    seed: Optional[int] = None

    @property
    def vertex_count(self) -> int:
        return self.topology.vertex_count

    @property
    def corrective_dim(self) -> int:
        return self.geom_corr.input_dim

    @property
    def variant(self) -> CorrectiveVariant:
        return self.geom_corr.variant

    def validate(self) -> None:
        self.topology.validate()
        self.base.validate()
        n3 = 3 * self.topology.vertex_count
        if len(self.base.a_g) != n3:
            raise InvalidModelError(f"base model has {len(self.base.a_g) // 3} vertices, "
                                    f"topology has {self.topology.vertex_count}")
        self.geom_corr.validate(n3)
        self.refl_corr.validate(n3)
        if self.geom_corr.input_dim != self.refl_corr.input_dim:
            raise InvalidModelError("geometry and reflectance correctives must share C")

    def mean_vertices(self) -> np.ndarray:
        return self.base.a_g.reshape(-1, 3)

    def with_correctives(self, geom_corr: CorrectiveMap, refl_corr: CorrectiveMap) -> "MultiLevelModel":
        return replace(self, geom_corr=geom_corr, refl_corr=refl_corr)


def eval_final(model: MultiLevelModel, alpha, beta, delta_g, delta_r) -> Tuple[np.ndarray, np.ndarray]:
    """(v^f, r^f) = (v^b + F_g(delta_g), r^b + F_r(delta_r))"""
    v_final = eval_base_geometry(model.base, alpha) + eval_corrective(model.geom_corr, delta_g)
    r_final = eval_base_reflectance(model.base, beta) + eval_corrective(model.refl_corr, delta_r)
    return v_final, r_final
