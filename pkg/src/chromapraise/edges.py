"""Canny edge detection and edge orientation statistics.

The stages are the classical five: truncated Gaussian blur (reflected
borders), Sobel gradients, non-maximum suppression along the quantized
gradient axis, double thresholding at fixed fractions of the maximum
magnitude, and hysteresis keeping weak pixels 8-connected to strong ones.

Non-maximum suppression compares each pixel with its two neighbors along
the gradient axis, oriented by the gradient sign: a pixel survives when
its magnitude strictly exceeds the downhill neighbor and is at least the
uphill neighbor.  On the exact two-pixel plateau of a symmetric step this
keeps a single line and stays covariant under image flips.

``lines_variance`` is the circular variance of doubled edge orientations,
1 - |mean exp(2 i theta)| over edge pixels: 0 for a single straight
orientation, 1 for an even split of perpendicular orientations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import GrayImage


@dataclass
class CannyParams:
    blur_sigma: float = 1.4
    kernel_half: int = 2
    low_threshold: float = 0.1
    high_threshold: float = 0.2

    def __post_init__(self):
        if self.blur_sigma <= 0:
            raise ValueError("blur_sigma must be positive")
        if self.kernel_half < 1:
            raise ValueError("kernel_half must be >= 1")
        if not 0 < self.low_threshold <= self.high_threshold <= 1:
            raise ValueError("need 0 < low_threshold <= high_threshold <= 1")


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    theta: np.ndarray  # axial orientation in (-pi/2, pi/2]


@dataclass
class EdgeMap:
    edges: np.ndarray  # bool

    @property
    def n_edges(self) -> int:
        return int(self.edges.sum())


def gaussian_kernel(sigma: float, kernel_half: int) -> np.ndarray:
    """(2k+1)^2 truncated Gaussian, normalized to unit sum."""
    ax = np.arange(-kernel_half, kernel_half + 1, dtype=np.float64)
    sq = ax[:, None] ** 2 + ax[None, :] ** 2
    k = np.exp(-sq / (2.0 * sigma * sigma))
    return k / k.sum()


def _shifts(arr: np.ndarray, k: int):
    """Returns shift(di, dj) views over a reflect-padded copy."""
    h, w = arr.shape
    p = np.pad(arr, k, mode="reflect")

    def sh(di, dj):
        return p[k + di : k + di + h, k + dj : k + dj + w]

    return sh


def gaussian_blur(gray: GrayImage, params: CannyParams | None = None) -> np.ndarray:
    """Truncated Gaussian smoothing with reflected borders.

    Mirror-symmetric offsets are summed pairwise so constant images stay
    exactly constant and image flips commute with the filter bitwise.
    """
    if params is None:
        params = CannyParams()
    k = params.kernel_half
    g = np.asarray(gray.pixels, dtype=np.float64)
    w1 = np.exp(-np.arange(k + 1, dtype=np.float64) ** 2 / (2.0 * params.blur_sigma**2))
    norm = (w1[0] + 2.0 * w1[1:].sum()) ** 2
    sh = _shifts(g, k)
    out = (w1[0] * w1[0]) * g
    for d in range(1, k + 1):
        out = out + (w1[0] * w1[d]) * (sh(0, -d) + sh(0, d))
        out = out + (w1[d] * w1[0]) * (sh(-d, 0) + sh(d, 0))
    for di in range(1, k + 1):
        for dj in range(1, k + 1):
            quad = (sh(-di, -dj) + sh(di, dj)) + (sh(-di, dj) + sh(di, -dj))
            out = out + (w1[di] * w1[dj]) * quad
    return out / norm


def sobel(blurred: np.ndarray) -> GradientField:
    """3x3 Sobel gradients with mirrored borders; theta in (-pi/2, pi/2].

    Row/column taps are grouped symmetrically for the same exactness
    guarantees as the blur stage.
    """
    sh = _shifts(np.asarray(blurred, dtype=np.float64), 1)
    left = (sh(-1, -1) + sh(1, -1)) + 2.0 * sh(0, -1)
    right = (sh(-1, 1) + sh(1, 1)) + 2.0 * sh(0, 1)
    top = (sh(-1, -1) + sh(-1, 1)) + 2.0 * sh(-1, 0)
    bottom = (sh(1, -1) + sh(1, 1)) + 2.0 * sh(1, 0)
    gx = left - right
    gy = top - bottom
    mag = np.hypot(gx, gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.arctan(gy / gx)
    theta = np.where(gx == 0, np.pi / 2, theta)
    return GradientField(gx, gy, mag, theta)


# axis offsets (drow, dcol) per quantized sector of theta
_AXES = ((0, 1), (1, 1), (1, 0), (1, -1))


def _sectors(theta: np.ndarray) -> np.ndarray:
    s = np.full(theta.shape, 2, dtype=np.int8)  # near-vertical default
    s[np.abs(theta) < np.pi / 8] = 0
    s[(theta >= np.pi / 8) & (theta < 3 * np.pi / 8)] = 1
    s[(theta <= -np.pi / 8) & (theta > -3 * np.pi / 8)] = 3
    return s


def non_maximum_suppression(grad: GradientField) -> np.ndarray:
    """Magnitude with non-axis-maximal pixels zeroed."""
    mag = grad.magnitude
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = mag
    sec = _sectors(grad.theta)
    keep = np.zeros((h, w), dtype=bool)
    for s, (dr, dc) in enumerate(_AXES):
        m_plus = padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
        m_minus = padded[1 - dr : 1 - dr + h, 1 - dc : 1 - dc + w]
        proj = grad.gy * dr + grad.gx * dc
        uphill = np.where(proj >= 0, m_plus, m_minus)
        downhill = np.where(proj >= 0, m_minus, m_plus)
        ok = (mag > downhill) & (mag >= uphill)
        keep |= ok & (sec == s)
    return np.where(keep & (mag > 0), mag, 0.0)


def hysteresis(suppressed: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keeps strong pixels plus weak pixels 8-connected to a strong one."""
    strong = suppressed >= high
    weak = suppressed >= low
    if not strong.any():
        return np.zeros_like(strong)
    eight = np.ones((3, 3), dtype=bool)
    return ndimage.binary_dilation(strong, structure=eight, iterations=0, mask=weak)


def canny(gray: GrayImage, params: CannyParams | None = None) -> EdgeMap:
    """Full five-stage detector; flat images produce an empty edge map."""
    if params is None:
        params = CannyParams()
    g = np.asarray(gray.pixels, dtype=np.float64)
    if g.shape[0] < 3 or g.shape[1] < 3:
        return EdgeMap(np.zeros(g.shape, dtype=bool))
    grad = sobel(gaussian_blur(gray, params))
    supp = non_maximum_suppression(grad)
    mmax = supp.max()
    if mmax == 0.0:
        return EdgeMap(np.zeros(g.shape, dtype=bool))
    return EdgeMap(
        hysteresis(supp, params.low_threshold * mmax, params.high_threshold * mmax)
    )


def edge_density(edge_map: EdgeMap) -> float:
    """Edge pixels over total pixels, in [0, 1]."""
    return edge_map.n_edges / edge_map.edges.size


def lines_variance(grad: GradientField, edge_map: EdgeMap) -> float:
    """Circular variance of doubled edge orientations; 0 when no edges."""
    mask = edge_map.edges
    if not mask.any():
        return 0.0
    doubled = 2.0 * grad.theta[mask]
    return float(1.0 - np.abs(np.exp(1j * doubled).mean()))


def edge_features(gray: GrayImage, params: CannyParams | None = None) -> tuple[float, float]:
    """(edge_density, lines_variance) for one image."""
    if params is None:
        params = CannyParams()
    g = np.asarray(gray.pixels, dtype=np.float64)
    if g.shape[0] < 3 or g.shape[1] < 3:
        return 0.0, 0.0
    grad = sobel(gaussian_blur(gray, params))
    supp = non_maximum_suppression(grad)
    mmax = supp.max()
    if mmax == 0.0:
        return 0.0, 0.0
    em = EdgeMap(
        hysteresis(supp, params.low_threshold * mmax, params.high_threshold * mmax)
    )
    return edge_density(em), lines_variance(grad, em)
