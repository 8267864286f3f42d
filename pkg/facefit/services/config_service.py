import copy
import json
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional

from facefit.energy.weights import Weights
from facefit.exceptions import ConfigError
from facefit.model.corrective import CorrectiveVariant
from facefit.optim.fitter import Schedule
from facefit.render.camera import FOCAL_SCALE, CameraIntrinsics
from facefit.utils.logging_setup import get_logger, log_config_change

logger = get_logger("services.config")

THREADS_ENV = "FACEFIT_THREADS"

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "model": {"path": "model", "n_vertices": 500, "m_s": 8, "m_e": 4, "m_r": 8, "C": 10,
              "variant": "linear", "hidden_dim": None, "seed": 0},
    "corpus": {"path": "corpus", "count": 20, "seed": 1, "bleed": True, "image_size": 64},
    "schedule": {"stage": "finetune", "pretrain_iterations": 2000, "finetune_iterations": 3000,
                 "pretrain_lr": 0.01, "lr_base": 0.001, "lr_geom": 0.005, "lr_refl": 0.01, "lr_gain": 100.0,
                 "corrective_boost": 1.0, "batch_size": 5, "rho": 0.95, "eps": 1e-6,
                 "divergence_factor": 1e6, "log_every": 100},
    "weights": {"file": None, "overrides": {}},
    "intrinsics": {"focal_scale": FOCAL_SCALE, "focal_px": None, "cx": None, "cy": None},
    "output": {"dir": "out"},
    "run": {"seed": 0, "log_level": "INFO", "log_dir": "logs"},
}


def thread_limit() -> int:
    """Worker count for per-image work, from FACEFIT_THREADS (default 1)"""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'") from e
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


class ConfigService:
    """Thread-safe service for loading and saving the run configuration (JSON)."""

    _instance = None
    _lock = threading.RLock()  # Re-entrant lock for thread safety

    def __new__(cls, config_path: str = "config.json"):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self, config_path: str = "config.json"):
        if self._initialized:
            return
        self._config_path = Path(config_path)
        self._config: Dict[str, Any] = {}
        self._load()
        self._initialized = True

    @classmethod
    def get_instance(cls):
        """Get the singleton instance of ConfigService"""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    @classmethod
    def reset(cls):
        """Forget the singleton (next construction reloads from disk)"""
        with cls._lock:
            cls._instance = None

    @property
    def path(self) -> Path:
        return self._config_path

    def _acquire_lock(self, timeout=5):
        acquired = self._lock.acquire(timeout=timeout)
        if not acquired:
            raise TimeoutError("Could not acquire config lock within timeout.")
        return True

    def _release_lock(self):
        self._lock.release()

    def _load(self):
        if self._acquire_lock():
            try:
                config = self._default_config()
                if self._config_path.exists():
                    try:
                        with open(self._config_path, "r", encoding="utf-8") as f:
                            loaded = json.load(f)
                    except json.JSONDecodeError as e:
                        raise ConfigError(f"{self._config_path}: invalid JSON ({e})") from e
                    self._check_schema(loaded)
                    for section, values in loaded.items():
                        config[section].update(values)
                else:
                    logger.info(f"{self._config_path} not found, using defaults")
                self._config = config
            finally:
                self._release_lock()

    def _default_config(self) -> Dict[str, Any]:
        return copy.deepcopy(DEFAULT_CONFIG)

    def _check_schema(self, loaded: Any):
        if not isinstance(loaded, dict):
            raise ConfigError(f"{self._config_path}: top level must be an object")
        for section, values in loaded.items():
            if section not in DEFAULT_CONFIG:
                raise ConfigError(f"{self._config_path}: unknown section '{section}'")
            if not isinstance(values, dict):
                raise ConfigError(f"{self._config_path}: section '{section}' must be an object")
            unknown = sorted(set(values) - set(DEFAULT_CONFIG[section]))
            if unknown:
                raise ConfigError(f"{self._config_path}: unknown key(s) in '{section}': {', '.join(unknown)}")

    def save(self):
        if self._acquire_lock():
            try:
                with open(self._config_path, "w", encoding="utf-8") as f:
                    json.dump(self._config, f, indent=2)
            finally:
                self._release_lock()

    def get(self, section: str, key: str, default: Any = None) -> Any:
        if self._acquire_lock():
            try:
                return self._config.get(section, {}).get(key, default)
            finally:
                self._release_lock()

    def set(self, section: str, key: str, value: Any):
        if section not in DEFAULT_CONFIG or key not in DEFAULT_CONFIG[section]:
            raise ConfigError(f"unknown setting {section}.{key}")
        if self._acquire_lock():
            try:
                old = self._config[section].get(key)
                self._config[section][key] = value
                log_config_change(f"{section}.{key}", old, value)
                self.save()
            finally:
                self._release_lock()

    def all(self) -> Dict[str, Any]:
        if self._acquire_lock():
            try:
                return copy.deepcopy(self._config)
            finally:
                self._release_lock()


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings of one CLI run"""
    model_path: Path = Path("model")
    corpus_path: Path = Path("corpus")
    output_dir: Path = Path("out")
    seed: int = 0
    n_vertices: int = 500
    m_s: int = 8
    m_e: int = 4
    m_r: int = 8
    C: int = 10
    variant: CorrectiveVariant = CorrectiveVariant.LINEAR
    hidden_dim: Optional[int] = None
    model_seed: int = 0
    corpus_count: int = 20
    corpus_seed: int = 1
    bleed: bool = True
    image_size: int = 64
    schedule: Schedule = field(default_factory=Schedule)
    focal_scale: float = FOCAL_SCALE
    focal_px: Optional[float] = None
    cx: Optional[float] = None
    cy: Optional[float] = None
    log_level: str = "INFO"
    log_dir: Path = Path("logs")

    @classmethod
    def from_service(cls, service: ConfigService) -> "RunConfig":
        cfg = service.all()
        base_dir = service.path.parent

        weights = Weights.finetune()
        weights_file = cfg["weights"]["file"]
        if weights_file:
            path = Path(weights_file)
            if not path.is_absolute():
                path = base_dir / path
            weights = Weights.from_file(path, weights)
        if cfg["weights"]["overrides"]:
            weights = Weights.from_dict(cfg["weights"]["overrides"], weights)

        sched = cfg["schedule"]
        try:
            variant = CorrectiveVariant(cfg["model"]["variant"])
        except ValueError as e:
            raise ConfigError(f"unknown corrective variant '{cfg['model']['variant']}'") from e
        try:
            schedule = Schedule(stage=sched["stage"],
                                pretrain_iterations=int(sched["pretrain_iterations"]),
                                finetune_iterations=int(sched["finetune_iterations"]),
                                pretrain_lr=float(sched["pretrain_lr"]), lr_base=float(sched["lr_base"]),
                                lr_geom=float(sched["lr_geom"]), lr_refl=float(sched["lr_refl"]),
                                lr_gain=float(sched["lr_gain"]), corrective_boost=float(sched["corrective_boost"]),
                                batch_size=int(sched["batch_size"]), seed=int(cfg["run"]["seed"]),
                                rho=float(sched["rho"]), eps=float(sched["eps"]),
                                divergence_factor=float(sched["divergence_factor"]),
                                log_every=int(sched["log_every"]), finetune_weights=weights)
            intr = cfg["intrinsics"]
            return cls(model_path=Path(cfg["model"]["path"]), corpus_path=Path(cfg["corpus"]["path"]),
                       output_dir=Path(cfg["output"]["dir"]), seed=int(cfg["run"]["seed"]),
                       n_vertices=int(cfg["model"]["n_vertices"]), m_s=int(cfg["model"]["m_s"]),
                       m_e=int(cfg["model"]["m_e"]), m_r=int(cfg["model"]["m_r"]), C=int(cfg["model"]["C"]),
                       variant=variant, hidden_dim=cfg["model"]["hidden_dim"], model_seed=int(cfg["model"]["seed"]),
                       corpus_count=int(cfg["corpus"]["count"]), corpus_seed=int(cfg["corpus"]["seed"]),
                       bleed=bool(cfg["corpus"]["bleed"]), image_size=int(cfg["corpus"]["image_size"]),
                       schedule=schedule, focal_scale=float(intr["focal_scale"]), focal_px=intr["focal_px"],
                       cx=intr["cx"], cy=intr["cy"], log_level=str(cfg["run"]["log_level"]),
                       log_dir=Path(cfg["run"]["log_dir"]))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{service.path}: invalid setting ({e})") from e

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply CLI flags; None means 'not given'"""
        given = {k: v for k, v in overrides.items() if v is not None}
        for key, value in given.items():
            if not hasattr(self, key):
                raise ConfigError(f"unknown run setting '{key}'")
            if getattr(self, key) != value:
                log_config_change(f"run.{key}", getattr(self, key), value)
        return replace(self, **given) if given else self

    def with_schedule(self, **overrides) -> "RunConfig":
        given = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, schedule=replace(self.schedule, **given)) if given else self

    def intrinsics(self, width: int, height: int) -> CameraIntrinsics:
        default = CameraIntrinsics.default_for(width, height, self.focal_scale)
        return CameraIntrinsics(focal_px=self.focal_px if self.focal_px is not None else default.focal_px,
                                cx=self.cx if self.cx is not None else default.cx,
                                cy=self.cy if self.cy is not None else default.cy,
                                width=width, height=height)

    @staticmethod
    def require(path: Path, what: str) -> Path:
        """Paths a run reads must exist"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"{what} not found: {path}")
        return path
