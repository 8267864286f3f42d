"""Energy weights, stage presets and the key=value weight file format"""

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Union

from facefit.exceptions import ConfigError
from facefit.utils.logging_setup import get_logger, log_config_change

logger = get_logger("energy.weights")

STAGES = ("pretrain", "finetune")

# Term name accepted by `ablate` -> weight field it zeroes
ABLATIONS = {
    "rstd": "w_rstd",
    "smo": "w_smo",
    "ref": "w_ref",
    "glo": "w_glo",
    "sta": "w_sta",
    "photo": "w_photo",
}


@dataclass(frozen=True)
class Weights:
    w_photo: float = 0.2
    w_reg: float = 0.003
    w_rstd: float = 0.002
    w_smo: float = 3.2e4
    w_ref: float = 13.0
    w_glo: float = 80.0
    w_sta: float = 0.08
    chroma_alpha: float = 50.0
    p_exp: float = 0.9
    eps_l21: float = 1e-4
    eps_p: float = 1e-8
    # photometric term on the final level (off while pretraining the base)
    final_photo: bool = True
    # w_ij on chromaticities c / (c_r + c_g + c_b) instead of raw RGB
    chroma_normalized: bool = False
    # landmark term; off when ablated
    landmarks: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type is bool or isinstance(value, bool):
                continue
            if not value >= 0:
                raise ConfigError(f"weight {f.name} must be >= 0, got {value}")
        if not 0.0 < self.p_exp <= 1.0:
            raise ConfigError(f"p_exp must lie in (0, 1], got {self.p_exp}")
        if not (self.eps_l21 > 0 and self.eps_p > 0):
            raise ConfigError("smoothing epsilons must be > 0")

    @classmethod
    def finetune(cls) -> "Weights":
        return cls()

    @classmethod
    def pretrain(cls) -> "Weights":
        """Base level only: photometric, landmark and statistical terms"""
        return cls(w_photo=1.9, w_reg=3e-5, w_rstd=2e-3, w_smo=0.0, w_ref=0.0, w_glo=0.0, w_sta=0.0,
                   final_photo=False)

    @classmethod
    def for_stage(cls, stage: str) -> "Weights":
        if stage not in STAGES:
            raise ConfigError(f"unknown stage '{stage}' (expected one of {', '.join(STAGES)})")
        return cls.pretrain() if stage == "pretrain" else cls.finetune()

    def with_overrides(self, **overrides) -> "Weights":
        names = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise ConfigError(f"unknown weight(s): {', '.join(unknown)}")
        for key, value in overrides.items():
            if getattr(self, key) != value:
                log_config_change(f"weights.{key}", getattr(self, key), value)
        return replace(self, **overrides)

    def ablate(self, terms: Iterable[str]) -> "Weights":
        """Switch off named terms ('sparse' drops the landmarks)"""
        overrides = {}
        for term in terms:
            if term == "sparse":
                overrides["landmarks"] = False
            elif term in ABLATIONS:
                overrides[ABLATIONS[term]] = 0.0
            else:
                raise ConfigError(f"cannot ablate '{term}' (choose from sparse, {', '.join(ABLATIONS)})")
        return self.with_overrides(**overrides) if overrides else self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict, base: "Weights" = None) -> "Weights":
        return (base or cls()).with_overrides(**{k: _coerce(k, v) for k, v in data.items()})

    @classmethod
    def from_file(cls, path: Union[str, Path], base: "Weights" = None) -> "Weights":
        """Read `key = value` lines; '#' starts a comment, unknown keys are rejected"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"weight file not found: {path}")
        values = {}
        with open(path, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = (part.strip() for part in line.split("=", 1))
                try:
                    values[key] = _coerce(key, value)
                except ValueError as e:
                    raise ConfigError(f"{path}:{lineno}: {e}") from e
        logger.info(f"loaded {len(values)} weight override(s) from {path}")
        return cls.from_dict(values, base)


_FLAGS = {f.name for f in fields(Weights) if f.type is bool or f.type == "bool"}


def _coerce(key: str, value):
    if key in _FLAGS:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key} expects a boolean, got '{value}'")
    if isinstance(value, bool):
        raise ValueError(f"{key} expects a number")
    return float(value)
