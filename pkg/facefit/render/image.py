"""Image sampling and sRGB transfer functions"""

from typing import NamedTuple

import numpy as np

from facefit.utils.logging_setup import log_diagnostic


class ImageSample(NamedTuple):
    colors: np.ndarray      # (M, 3)
    gradient: np.ndarray    # (M, 3, 2) d colour / d (u_x, u_y)
    clamped: int            # samples moved onto the image border


def srgb_to_linear(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.where(values <= 0.04045, values / 12.92, ((values + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(values: np.ndarray) -> np.ndarray:
    values = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    return np.where(values <= 0.0031308, values * 12.92, 1.055 * values ** (1.0 / 2.4) - 0.055)


def sample_image_with_gradient(image: np.ndarray, u: np.ndarray) -> ImageSample:
    """
    Bilinear interpolation with pixel centres at integer coordinates.

    Positions outside [0, W-1] x [0, H-1] are clamped to the border (zero
    derivative along the clamped axis) and counted; visibility normally
    excludes them beforehand.
    """
    height, width = image.shape[:2]
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    x = np.clip(u[:, 0], 0.0, width - 1.0)
    y = np.clip(u[:, 1], 0.0, height - 1.0)
    clamped_x = x != u[:, 0]
    clamped_y = y != u[:, 1]
    clamped = int(np.count_nonzero(clamped_x | clamped_y))

    x0 = np.minimum(np.floor(x).astype(np.int64), width - 2)
    y0 = np.minimum(np.floor(y).astype(np.int64), height - 2)
    a = (x - x0)[:, None]
    b = (y - y0)[:, None]

    i00 = image[y0, x0]
    i10 = image[y0, x0 + 1]
    i01 = image[y0 + 1, x0]
    i11 = image[y0 + 1, x0 + 1]

    colors = (1 - a) * (1 - b) * i00 + a * (1 - b) * i10 + (1 - a) * b * i01 + a * b * i11
    dx = (1 - b) * (i10 - i00) + b * (i11 - i01)
    dy = (1 - a) * (i01 - i00) + a * (i11 - i10)
    dx[clamped_x] = 0.0
    dy[clamped_y] = 0.0
    return ImageSample(colors, np.stack([dx, dy], axis=-1), clamped)


def sample_image(image: np.ndarray, u) -> np.ndarray:
    """Bilinearly interpolated colour(s) at continuous pixel position(s)"""
    u = np.asarray(u, dtype=float)
    sample = sample_image_with_gradient(image, u)
    if sample.clamped:
        log_diagnostic("render.image", f"{sample.clamped} sample(s) outside the image clamped to the edge")
    return sample.colors.reshape(u.shape[:-1] + (image.shape[2],))
