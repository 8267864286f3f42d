"""Fit results and parameter records as JSON"""

import json
from pathlib import Path
from typing import Union

from facefit.exceptions import ConfigError
from facefit.optim.fitter import FitResult
from facefit.optim.params import ParamVector


def _dump(data: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def _load(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


def save_result(result: FitResult, path: Union[str, Path], **extra) -> Path:
    """result.json: parameters, energy trajectory and photometric errors (plus any extra fields)"""
    data = result.to_dict()
    data.update(extra)
    return _dump(data, Path(path))


def load_result(path: Union[str, Path]) -> FitResult:
    data = _load(Path(path))
    try:
        return FitResult.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: not a fit result ({e})") from e


def save_params(params: ParamVector, path: Union[str, Path], **extra) -> Path:
    data = {"params": params.to_dict()}
    data.update(extra)
    return _dump(data, Path(path))


def load_params(path: Union[str, Path]) -> ParamVector:
    data = _load(Path(path))
    try:
        return ParamVector.from_dict(data["params"] if "params" in data else data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: not a parameter record ({e})") from e


def save_json(data: dict, path: Union[str, Path]) -> Path:
    return _dump(data, Path(path))


def load_json(path: Union[str, Path]) -> dict:
    return _load(Path(path))
