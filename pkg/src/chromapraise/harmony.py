"""Color wheel quantization, harmony patterns, clusters and CCT.

Pixels quantize to a 12-bin hue wheel (30 degrees per bin) or to one of
three neutral classes: very dark pixels are black, desaturated bright
pixels white, remaining desaturated pixels gray.  Harmony scores measure
how much of the chromatic mass a rotated template can cover: each score
is the maximum over the 12 wheel rotations of the covered fraction, so
scores live in [0, 1] and are invariant under global hue rotation by
multiples of 30 degrees.  Images whose chromatic mass is below
min_chromatic_mass get all-zero scores.

Correlated color temperature comes from the mean linear-RGB color via
the McCamy chromaticity approximation, with a 6500 K fallback for
degenerate chromaticities (for example an all-black image).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import _RGB_TO_XYZ, HsvImage, RgbImage, hsv_to_rgb

# offset templates on the 12-bin wheel, keyed by output column name
PATTERNS = {
    "X_comp": (0, 6),
    "X_analog_triad": (0, 1, 2),
    "X_classic_triad": (0, 4, 8),
    "X_contrst_triad": (0, 5, 7),
    "X_quad": (0, 3, 6, 9),
    "X_rectangle": (0, 2, 6, 8),
}

# hue-wheel cluster membership (violet, bin 10, belongs to none)
CLUSTERS = {
    "red_cluster": (11, 0, 1),
    "yellow_cluster": (2, 3),
    "green_cluster": (4, 5, 6),
    "blue_cluster": (7, 8, 9),
}

BLACK, WHITE, GRAY = 12, 13, 14  # label codes past the 12 hue bins


@dataclass
class HarmonyParams:
    sat_min: float = 25.0
    val_min: float = 40.0
    val_max_white: float = 215.0
    harmonic_cutoff: float = 0.95
    min_chromatic_mass: float = 0.05

    def __post_init__(self):
        if not 0 <= self.harmonic_cutoff <= 1:
            raise ValueError("harmonic_cutoff must be in [0, 1]")
        if self.val_min > self.val_max_white:
            raise ValueError("val_min must not exceed val_max_white")


@dataclass
class WheelHistogram:
    bins: np.ndarray  # (12,) chromatic fractions
    black: float
    white: float
    gray: float

    @property
    def chromatic_mass(self) -> float:
        # summed in sorted order so any permutation of the bins (for
        # example a global hue rotation) yields the bitwise-same mass
        return float(np.sort(self.bins).sum())

    def total(self) -> float:
        return self.chromatic_mass + self.black + self.white + self.gray


def quantize_to_wheel(h, s, v, params: HarmonyParams | None = None):
    """Label for one HSV pixel: hue bin 0..11 or BLACK / WHITE / GRAY."""
    if params is None:
        params = HarmonyParams()
    if v < params.val_min:
        return BLACK
    if s < params.sat_min:
        return WHITE if v > params.val_max_white else GRAY
    return int(h // 30) % 12


def _label_map(img: HsvImage, params: HarmonyParams) -> np.ndarray:
    px = np.asarray(img.pixels, dtype=np.float64)
    h, s, v = px[..., 0], px[..., 1], px[..., 2]
    labels = (h // 30).astype(np.int64) % 12
    labels[s < params.sat_min] = GRAY
    labels[(s < params.sat_min) & (v > params.val_max_white)] = WHITE
    labels[v < params.val_min] = BLACK
    return labels


def wheel_histogram(img: HsvImage, params: HarmonyParams | None = None) -> WheelHistogram:
    """Fractions of pixels per wheel bin and neutral class (sums to 1)."""
    if params is None:
        params = HarmonyParams()
    labels = _label_map(img, params)
    counts = np.bincount(labels.ravel(), minlength=15).astype(np.float64)
    counts /= labels.size
    return WheelHistogram(
        counts[:12], float(counts[BLACK]), float(counts[WHITE]), float(counts[GRAY])
    )


def harmony_scores(hist: WheelHistogram, params: HarmonyParams | None = None) -> dict[str, float]:
    """Best covered chromatic fraction per pattern, in [0, 1]."""
    if params is None:
        params = HarmonyParams()
    mass = hist.chromatic_mass
    if mass < params.min_chromatic_mass:
        return {name: 0.0 for name in PATTERNS}
    p = hist.bins / mass
    scores = {}
    for name, offsets in PATTERNS.items():
        scores[name] = max(
            float(sum(p[(o + rot) % 12] for o in offsets)) for rot in range(12)
        )
    return scores


def is_harmonic(scores: dict[str, float], cutoff: float = 0.95) -> bool:
    """True when any pattern covers at least the cutoff fraction."""
    return any(v >= cutoff for v in scores.values())


def mccamy_cct(mean_rgb) -> float:
    """CCT in kelvin from one mean sRGB color via McCamy's polynomial."""
    rgb = np.asarray(mean_rgb, dtype=np.float64) / 255.0
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = _RGB_TO_XYZ @ lin
    total = xyz.sum()
    if total < 1e-9:
        return 6500.0
    x, y = xyz[0] / total, xyz[1] / total
    if abs(0.1858 - y) < 1e-6:
        return 6500.0
    n = (x - 0.3320) / (0.1858 - y)
    cct = 449.0 * n**3 + 3525.0 * n**2 + 6823.3 * n + 5520.33
    return float(max(cct, 1.0))


def cluster_frequencies(hist: WheelHistogram, img: HsvImage) -> dict[str, float]:
    """Cluster shares of chromatic mass, black share, and mean-color CCT."""
    mass = hist.chromatic_mass
    out = {}
    for name, members in CLUSTERS.items():
        out[name] = float(sum(hist.bins[m] for m in members) / mass) if mass > 0 else 0.0
    out["black"] = hist.black
    rgb = hsv_to_rgb(img).pixels.astype(np.float64)
    out["CCT"] = mccamy_cct(rgb.reshape(-1, 3).mean(axis=0))
    return out


def _canonical_palette() -> np.ndarray:
    """RGB colors for the 15 labels: 12 bin centers plus neutrals."""
    hsv = np.zeros((1, 15, 3))
    for b in range(12):
        hsv[0, b] = (30.0 * b + 15.0, 255.0, 255.0)
    palette = hsv_to_rgb(HsvImage(hsv)).pixels[0].copy()
    palette[BLACK] = (0, 0, 0)
    palette[WHITE] = (255, 255, 255)
    palette[GRAY] = (128, 128, 128)
    return palette


def frequency_decomposition(
    img: HsvImage, params: HarmonyParams | None = None
) -> tuple[WheelHistogram, RgbImage]:
    """Histogram plus a preview image of every pixel's canonical color."""
    if params is None:
        params = HarmonyParams()
    labels = _label_map(img, params)
    hist = wheel_histogram(img, params)
    return hist, RgbImage(_canonical_palette()[labels])
