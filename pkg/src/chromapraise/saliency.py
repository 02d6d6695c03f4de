"""Interest point detection via a discrete symmetry transform.

Every pixel is scored by the product DST = E * T where

* E sums absolute gray differences over unit-distance pixel pairs that
  straddle the rasterized circles C_r and C_{r+1} around the pixel, and
* T = 1 - std_k(T_k) penalizes anisotropy of n axial moments
  T_k = sum_{(l,m) in C_r} |(i-l) sin(pi k/n) - (j-m) cos(pi k/n)| g(l,m),
  each moment normalized by its image-wide maximum first.

Pixels closer than r+1 to the border get score 0.  Candidate points must
score at least mean + threshold_sigmas * std of the map; survivors are
thinned by greedy non-maximum suppression so no two points lie within
nms_radius of each other (ties broken row-major).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import GrayImage


@dataclass
class DstParams:
    radius: int = 3
    axes: int = 4
    threshold_sigmas: float = 3.0
    nms_radius: int = 5

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.axes < 2:
            raise ValueError("axes must be >= 2")
        if self.nms_radius < 1:
            raise ValueError("nms_radius must be >= 1")


@dataclass
class InterestPoints:
    coords: np.ndarray  # (k, 2) array of (row, col)
    scores: np.ndarray  # (k,)

    def __len__(self) -> int:
        return len(self.coords)


def circle_offsets(r: int) -> list[tuple[int, int]]:
    """Offsets whose Euclidean length rounds (half-up) to r."""
    out = []
    for dl in range(-r - 1, r + 2):
        for dm in range(-r - 1, r + 2):
            if int(math.hypot(dl, dm) + 0.5) == r:
                out.append((dl, dm))
    return out


def _circle_pairs(r: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Unit-distance pairs with one pixel on C_r and one on C_{r+1}."""
    inner = set(circle_offsets(r))
    outer = set(circle_offsets(r + 1))
    pairs = []
    for a in sorted(inner):
        for step in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            b = (a[0] + step[0], a[1] + step[1])
            if b in outer:
                pairs.append((a, b))
    return pairs


def dst_map(gray: GrayImage, params: DstParams | None = None) -> np.ndarray:
    """Per-pixel DST scores; the border band of width r+1 is zero."""
    if params is None:
        params = DstParams()
    g = np.asarray(gray.pixels, dtype=np.float64)
    h, w = g.shape
    r, n = params.radius, params.axes
    m = r + 1
    out = np.zeros((h, w), dtype=np.float64)
    ih, iw = h - 2 * m, w - 2 * m
    if ih <= 0 or iw <= 0:
        return out

    def shifted(dl, dm):
        return g[m + dl : m + dl + ih, m + dm : m + dm + iw]

    e = np.zeros((ih, iw), dtype=np.float64)
    for a, b in _circle_pairs(r):
        e += np.abs(shifted(*a) - shifted(*b))

    ring = circle_offsets(r)
    tk = np.zeros((n, ih, iw), dtype=np.float64)
    for k in range(n):
        s, c = math.sin(math.pi * k / n), math.cos(math.pi * k / n)
        for dl, dm in ring:
            coef = abs(dl * s - dm * c)
            if coef:
                tk[k] += coef * shifted(dl, dm)
    peaks = tk.reshape(n, -1).max(axis=1)
    safe = np.where(peaks > 0, peaks, 1.0)
    tk /= safe[:, None, None]
    t = 1.0 - tk.std(axis=0)

    out[m : m + ih, m : m + iw] = e * t
    return out


def interest_points(dst: np.ndarray, params: DstParams | None = None) -> InterestPoints:
    """Thresholds the DST map and thins survivors by greedy NMS."""
    if params is None:
        params = DstParams()
    cutoff = dst.mean() + params.threshold_sigmas * dst.std()
    rows, cols = np.nonzero((dst >= cutoff) & (dst > 0))
    if len(rows) == 0:
        return InterestPoints(np.empty((0, 2), dtype=int), np.empty(0))
    scores = dst[rows, cols]
    order = np.lexsort((cols, rows, -scores))
    kept_rc: list[tuple[int, int]] = []
    kept_scores: list[float] = []
    rad = params.nms_radius
    for idx in order:
        i, j = int(rows[idx]), int(cols[idx])
        if any(math.hypot(i - ki, j - kj) <= rad for ki, kj in kept_rc):
            continue
        kept_rc.append((i, j))
        kept_scores.append(float(scores[idx]))
    return InterestPoints(np.array(kept_rc, dtype=int), np.array(kept_scores))


def count_interest_points(gray: GrayImage, params: DstParams | None = None) -> int:
    """Convenience wrapper: number of interest points in the image."""
    return len(interest_points(dst_map(gray, params), params))
