"""Image loading, resizing and color-space conversions.

All downstream feature extraction works on the array types defined here:
8-bit RGB in, float64 Lab / HSV / gray out.  HSV uses hue in degrees
[0, 360) and saturation/value on the 0..255 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

# sRGB -> XYZ matrix and D65 reference white (2 degree observer)
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class RgbImage:
    """8-bit RGB raster, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"RGB pixel array must be (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image has zero width or height")
        self.pixels = px.astype(np.uint8, copy=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class LabImage:
    """CIELab raster, float64, shape (height, width, 3)."""

    pixels: np.ndarray


@dataclass
class HsvImage:
    """HSV raster, float64: hue in degrees [0, 360), s and v in [0, 255]."""

    pixels: np.ndarray


@dataclass
class GrayImage:
    """Luma grayscale raster, float64 in [0, 255], shape (height, width)."""

    pixels: np.ndarray


def load_rgb(path) -> RgbImage:
    """Decodes an image file to 8-bit RGB.

    Args:
        path: image file path (any format Pillow can decode).

    Returns:
        RgbImage with non-zero dimensions.

    Raises:
        OSError: unreadable file (message names the path).
        ValueError: malformed or zero-sized image data.
    """
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
    except FileNotFoundError:
        raise OSError(f"cannot read image file: {path}") from None
    except UnidentifiedImageError:
        raise ValueError(f"malformed or unsupported image data: {path}") from None
    except OSError as exc:
        raise ValueError(f"malformed image data: {path}: {exc}") from None
    arr = np.asarray(rgb, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image has zero width or height: {path}")
    return RgbImage(arr)


def resize_max_side(img: RgbImage, max_side: int = 512) -> RgbImage:
    """Downsamples so the longer side equals max_side; never upsamples.

    Uses area averaging.  The scaled short side is rounded half-up and
    floored at one pixel.
    """
    if max_side < 1:
        raise ValueError("max_side must be >= 1")
    w, h = img.width, img.height
    longer = max(w, h)
    if longer <= max_side:
        return img
    if w >= h:
        nw = max_side
        nh = max(1, int(h * max_side / w + 0.5))
    else:
        nh = max_side
        nw = max(1, int(w * max_side / h + 0.5))
    resized = Image.fromarray(img.pixels).resize((nw, nh), Image.Resampling.BOX)
    return RgbImage(np.asarray(resized, dtype=np.uint8))


def srgb_to_lab(img: RgbImage) -> LabImage:
    """Converts 8-bit sRGB to CIELab (D65 white point).

    Returns:
        LabImage with L in [0, 100], a/b roughly in [-128, 128].
    """
    rgb = img.pixels.astype(np.float64) / 255.0
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T
    t = xyz / _D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(t > eps, np.cbrt(t), t / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return LabImage(lab)


def rgb_to_hsv(img: RgbImage) -> HsvImage:
    """Converts 8-bit RGB to hexcone HSV.

    Hue is in degrees [0, 360); saturation and value stay on the 0..255
    scale.  Achromatic pixels get hue 0 by convention.
    """
    rgb = img.pixels.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    c = maxc - minc
    safe_c = np.where(c == 0, 1.0, c)
    # later assignments win, so ties resolve r over g over b
    h = np.where(maxc == b, (r - g) / safe_c + 4.0, 0.0)
    h = np.where(maxc == g, (b - r) / safe_c + 2.0, h)
    h = np.where(maxc == r, ((g - b) / safe_c) % 6.0, h)
    h = np.where(c == 0, 0.0, h) * 60.0
    h %= 360.0
    s = np.where(maxc == 0, 0.0, c / np.where(maxc == 0, 1.0, maxc)) * 255.0
    hsv = np.stack([h, s, maxc], axis=-1)
    return HsvImage(hsv)


def hsv_to_rgb(hsv: HsvImage) -> RgbImage:
    """Inverse hexcone conversion back to 8-bit RGB (rounded)."""
    px = np.asarray(hsv.pixels, dtype=np.float64)
    h = (px[..., 0] % 360.0) / 60.0
    s = px[..., 1] / 255.0
    v = px[..., 2]
    c = v * s
    x = c * (1.0 - np.abs(h % 2.0 - 1.0))
    m = v - c
    sector = np.floor(h).astype(int) % 6
    zeros = np.zeros_like(c)
    r = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [c, x, zeros, zeros, x], c)
    g = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [x, c, c, x, zeros], zeros)
    b = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [zeros, zeros, x, c, c], x)
    rgb = np.stack([r + m, g + m, b + m], axis=-1)
    return RgbImage(np.clip(np.round(rgb), 0, 255).astype(np.uint8))


def to_gray(img: RgbImage) -> GrayImage:
    """Luma grayscale: 0.299 R + 0.587 G + 0.114 B, kept as float."""
    return GrayImage(img.pixels.astype(np.float64) @ _LUMA)
