"""Color complexity measure over local Lab windows.

Each pixel gets a score psi(i, j) that grows as window colors spread away
from the window mean.  The pixel term uses a saturating Lab difference

    D(c1, c2) = 1 - exp(-||c1 - c2|| / gamma)

mapped through a Gaussian kernel G_a(t) = exp(-t^2 / (2 a^2)); the
contribution of one window pixel is G_a(0) - G_a(D), which is 0 for a
pixel exactly at the window mean and approaches 1 - exp(-1 / (2 a^2)) at
maximal difference.  A perfectly flat image therefore scores exactly 0.
The scalar image measure is the mean of psi over all pixels.

Windows are clamped at image borders: the mean and the sum run over the
available pixels only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import LabImage


@dataclass
class CcmParams:
    window_half: int = 2
    gamma: float = 30.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.window_half < 1:
            raise ValueError("window_half must be >= 1")
        if self.gamma <= 0 or self.alpha <= 0:
            raise ValueError("gamma and alpha must be positive")


def color_difference(c1, c2, gamma: float = 30.0) -> float:
    """Saturating Lab color difference in [0, 1).

    Equals 0 iff the colors match, 1 - 1/e at Euclidean distance gamma,
    and approaches 1 for very distant colors.
    """
    dist = float(np.linalg.norm(np.asarray(c1, dtype=np.float64) - np.asarray(c2, dtype=np.float64)))
    return 1.0 - np.exp(-dist / gamma)


def _window_means(lab: np.ndarray, w: int) -> np.ndarray:
    """Per-pixel mean of the (2w+1)^2 window clamped to image bounds."""
    h, wd = lab.shape[:2]
    pad = np.zeros((h + 1, wd + 1, lab.shape[2]), dtype=np.float64)
    pad[1:, 1:] = lab.cumsum(0).cumsum(1)
    rows = np.arange(h)
    cols = np.arange(wd)
    lo_i = np.maximum(rows - w, 0)
    hi_i = np.minimum(rows + w, h - 1) + 1
    lo_j = np.maximum(cols - w, 0)
    hi_j = np.minimum(cols + w, wd - 1) + 1
    total = (
        pad[hi_i[:, None], hi_j[None, :]]
        - pad[lo_i[:, None], hi_j[None, :]]
        - pad[hi_i[:, None], lo_j[None, :]]
        + pad[lo_i[:, None], lo_j[None, :]]
    )
    counts = (hi_i - lo_i)[:, None] * (hi_j - lo_j)[None, :]
    return total / counts[..., None]


def ccm_map(lab: LabImage, params: CcmParams | None = None) -> np.ndarray:
    """Per-pixel complexity map psi, non-negative, flat image -> all zeros."""
    if params is None:
        params = CcmParams()
    px = np.asarray(lab.pixels, dtype=np.float64)
    h, wd = px.shape[:2]
    w = params.window_half
    mean = _window_means(px, w)
    psi = np.zeros((h, wd), dtype=np.float64)
    inv2a2 = 1.0 / (2.0 * params.alpha * params.alpha)
    for dy in range(-w, w + 1):
        for dx in range(-w, w + 1):
            # overlap of the shifted source with the image
            ti0, ti1 = max(0, -dy), min(h, h - dy)
            tj0, tj1 = max(0, -dx), min(wd, wd - dx)
            if ti0 >= ti1 or tj0 >= tj1:
                continue
            src = px[ti0 + dy : ti1 + dy, tj0 + dx : tj1 + dx]
            dist = np.linalg.norm(src - mean[ti0:ti1, tj0:tj1], axis=-1)
            d = 1.0 - np.exp(-dist / params.gamma)
            psi[ti0:ti1, tj0:tj1] += 1.0 - np.exp(-d * d * inv2a2)
    return psi


def ccm(lab: LabImage, params: CcmParams | None = None) -> float:
    """Scalar color complexity: mean of the psi map."""
    return float(ccm_map(lab, params).mean())
