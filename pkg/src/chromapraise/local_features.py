"""Per-segment color features of the two largest regions.

Reads a finished segmentation and reports HSV means of the first and
second largest segments, the largest segment's maximum per-channel
contrast against its adjacent segments (hue differences wrapped onto the
circle, so never above 180), area fractions, isoperimetric shape
complexities P^2 / (4 pi A), and the segment count.  Features that need a
second segment are -1 when the image has only one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .segmentation import RegionStats, Segmentation

SENTINEL = -1.0


@dataclass
class LocalFeatures:
    fls_h: float
    fls_s: float
    fls_v: float
    sls_h: float
    sls_s: float
    sls_v: float
    contrast_h: float
    contrast_s: float
    contrast_v: float
    area_of_fls: float
    area_of_sls: float
    shape_complexity_fls: float
    shape_complexity_sls: float
    number_of_segments: int


def shape_complexity(region: RegionStats) -> float:
    """Isoperimetric quotient; 1 for an ideal disc, larger when ragged."""
    return region.perimeter**2 / (4.0 * math.pi * region.area)


def hue_gap(a: float, b: float) -> float:
    """Absolute hue difference on the 360 circle, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def segment_contrasts(seg: Segmentation) -> tuple[float, float, float]:
    """Largest segment's max per-channel mean difference to its neighbors.

    All three are -1 when the largest segment has no neighbor.
    """
    fls = seg.regions[0]
    if not fls.neighbors:
        return SENTINEL, SENTINEL, SENTINEL
    ch = cs = cv = 0.0
    for label in sorted(fls.neighbors):
        nb = seg.regions[label]
        ch = max(ch, hue_gap(fls.hue_mean, nb.hue_mean))
        cs = max(cs, abs(fls.sat_mean - nb.sat_mean))
        cv = max(cv, abs(fls.val_mean - nb.val_mean))
    return ch, cs, cv


def local_features(seg: Segmentation) -> LocalFeatures:
    total = seg.labels.size
    fls = seg.regions[0]
    contrast_h, contrast_s, contrast_v = segment_contrasts(seg)
    if seg.n_regions >= 2:
        sls = seg.regions[1]
        sls_h, sls_s, sls_v = sls.hue_mean, sls.sat_mean, sls.val_mean
        area_of_sls = sls.area / total
        shape_sls = shape_complexity(sls)
    else:
        sls_h = sls_s = sls_v = SENTINEL
        area_of_sls = SENTINEL
        shape_sls = SENTINEL
    return LocalFeatures(
        fls_h=fls.hue_mean,
        fls_s=fls.sat_mean,
        fls_v=fls.val_mean,
        sls_h=sls_h,
        sls_s=sls_s,
        sls_v=sls_v,
        contrast_h=contrast_h,
        contrast_s=contrast_s,
        contrast_v=contrast_v,
        area_of_fls=fls.area / total,
        area_of_sls=area_of_sls,
        shape_complexity_fls=shape_complexity(fls),
        shape_complexity_sls=shape_sls,
        number_of_segments=seg.n_regions,
    )
