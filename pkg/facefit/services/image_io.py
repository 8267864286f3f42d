"""PNG / PPM reading and writing through QImage; arrays are linear RGB in [0, 1]"""

from pathlib import Path
from typing import Union

import numpy as np
from PySide6.QtGui import QImage

from facefit.exceptions import ConfigError
from facefit.render.image import linear_to_srgb, srgb_to_linear
from facefit.utils.logging_setup import get_logger

logger = get_logger("services.image_io")

_FORMATS = {".png": "PNG", ".ppm": "PPM"}


def _format_for(path: Path) -> str:
    fmt = _FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ConfigError(f"{path}: unsupported image type (use .png or .ppm)")
    return fmt


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Linear float image -> 8-bit sRGB, clamped to [0, 1] first"""
    return np.round(linear_to_srgb(image) * 255.0).astype(np.uint8)


def from_bytes(pixels: np.ndarray) -> np.ndarray:
    return srgb_to_linear(pixels.astype(float) / 255.0)


def write_image(path: Union[str, Path], image: np.ndarray) -> Path:
    path = Path(path)
    fmt = _format_for(path)
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    pixels = np.ascontiguousarray(to_bytes(image))
    height, width = pixels.shape[:2]
    qimage = QImage(pixels.data, width, height, 3 * width, QImage.Format.Format_RGB888).copy()
    path.parent.mkdir(parents=True, exist_ok=True)
    if not qimage.save(str(path), fmt):
        raise OSError(f"could not write image {path}")
    logger.debug(f"wrote {width}x{height} image to {path}")
    return path


def read_image(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"image not found: {path}")
    qimage = QImage(str(path))
    if qimage.isNull():
        raise ConfigError(f"{path}: not a readable image")
    qimage = qimage.convertToFormat(QImage.Format.Format_RGB888)
    width, height, stride = qimage.width(), qimage.height(), qimage.bytesPerLine()
    buffer = np.frombuffer(qimage.constBits(), dtype=np.uint8, count=stride * height)
    pixels = buffer.reshape(height, stride)[:, :3 * width].reshape(height, width, 3).copy()
    return from_bytes(pixels)
