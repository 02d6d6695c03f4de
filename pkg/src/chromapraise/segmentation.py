"""Graph-based segmentation and statistical region merging.

Stage one is the classic greedy union-find segmentation on the 4-connected
pixel graph with Euclidean Lab edge weights: edges are processed in
ascending weight order (ties broken by pixel ids) and two components merge
when the connecting weight does not exceed

    MInt = min(Int(C1) + k/|C1|, Int(C2) + k/|C2|)

where Int(C) is the largest edge in the component's minimum spanning tree.
Because edges arrive in ascending order, Int(C) is simply the weight of
the edge that last merged into C, which the union-find maintains in O(1).

Stage two repeatedly merges the adjacent region pair with the smallest
Fisher distance

    FD_k = sqrt(n_i + n_j) |mu_ki - mu_kj| / sqrt(n_i s2_ki + n_j s2_kj)

(per Lab channel k, falling back to |mu_ki - mu_kj| when both variances
are zero; FD is the max over enabled channels).  A merge happens only
while FD < fisher_threshold and three gates all pass for at least one
orientation of the pair: the pairwise distance, the distance from the
region to the pooled statistics of all its neighbors, and the distance to
the pooled subset of neighbors adjacent to the merge candidate (candidate
included).  Pooling adds raw sums, so merged statistics stay exact.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import HsvImage, LabImage


@dataclass
class SegParams:
    k_felz: float = 300.0
    fisher_threshold: float = 4.0
    channel_gates: tuple[bool, bool, bool] = (True, True, True)

    def __post_init__(self):
        if self.k_felz < 0:
            raise ValueError("k_felz must be >= 0")
        if self.fisher_threshold <= 0:
            raise ValueError("fisher_threshold must be positive")
        if len(self.channel_gates) != 3 or not any(self.channel_gates):
            raise ValueError("channel_gates needs three flags with at least one enabled")


@dataclass
class RegionStats:
    label: int
    area: int
    perimeter: int
    lab_sum: np.ndarray
    lab_sumsq: np.ndarray
    hue_cos: float
    hue_sin: float
    sat_sum: float
    val_sum: float
    neighbors: dict[int, int] = field(default_factory=dict)  # label -> shared edges
    _mom: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def lab_mean(self) -> np.ndarray:
        return self.lab_sum / self.area

    @property
    def lab_var(self) -> np.ndarray:
        v = self.lab_sumsq / self.area - self.lab_mean**2
        return np.maximum(v, 0.0)

    def moments(self) -> tuple:
        """(mean_l, mean_a, mean_b, var_l, var_a, var_b) as plain floats,
        cached until invalidate()."""
        if self._mom is None:
            n = self.area
            m = tuple(float(self.lab_sum[k] / n) for k in range(3))
            v = tuple(
                max(float(self.lab_sumsq[k] / n) - m[k] * m[k], 0.0) for k in range(3)
            )
            self._mom = m + v
        return self._mom

    def invalidate(self) -> None:
        self._mom = None

    @property
    def hue_mean(self) -> float:
        """Circular mean hue in degrees [0, 360)."""
        return float(np.degrees(np.arctan2(self.hue_sin, self.hue_cos)) % 360.0)

    @property
    def sat_mean(self) -> float:
        return self.sat_sum / self.area

    @property
    def val_mean(self) -> float:
        return self.val_sum / self.area


@dataclass
class Segmentation:
    labels: np.ndarray  # (H, W) contiguous region ids, 0..R-1 by area rank
    regions: list[RegionStats]  # index == label, sorted by area descending
    lab: LabImage
    hsv: HsvImage

    @property
    def n_regions(self) -> int:
        return len(self.regions)


class _Universe:
    """Union-find over pixel ids with component size and merge threshold."""

    def __init__(self, n: int, k: float):
        self.parent = list(range(n))
        self.size = [1] * n
        self.internal = [0.0] * n  # max MST edge weight of the component
        self.threshold = [k] * n  # internal + k / size
        self.k = k

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def join(self, a: int, b: int, w: float) -> None:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = w
        self.threshold[a] = w + self.k / self.size[a]


def _pixel_edges(lab: np.ndarray):
    """4-neighbor edges (u, v, w), u < v, sorted by (w, u, v)."""
    h, w = lab.shape[:2]
    ids = np.arange(h * w).reshape(h, w)
    right_u = ids[:, :-1].ravel()
    right_v = ids[:, 1:].ravel()
    right_w = np.linalg.norm(lab[:, :-1] - lab[:, 1:], axis=-1).ravel()
    down_u = ids[:-1, :].ravel()
    down_v = ids[1:, :].ravel()
    down_w = np.linalg.norm(lab[:-1, :] - lab[1:, :], axis=-1).ravel()
    u = np.concatenate([right_u, down_u])
    v = np.concatenate([right_v, down_v])
    wt = np.concatenate([right_w, down_w])
    order = np.lexsort((v, u, wt))
    return u[order], v[order], wt[order]


def felzenszwalb(lab: LabImage, params: SegParams | None = None) -> np.ndarray:
    """Raw label map from the greedy graph merge; labels contiguous from 0
    in row-major first-occurrence order."""
    if params is None:
        params = SegParams()
    px = np.asarray(lab.pixels, dtype=np.float64)
    h, w = px.shape[:2]
    uni = _Universe(h * w, params.k_felz)
    us, vs, ws = _pixel_edges(px)
    find, join = uni.find, uni.join
    thr = uni.threshold
    for u, v, wt in zip(us.tolist(), vs.tolist(), ws.tolist()):
        ra, rb = find(u), find(v)
        if ra != rb and wt <= min(thr[ra], thr[rb]):
            join(ra, rb, wt)
    roots = np.array([find(i) for i in range(h * w)])
    _, labels = np.unique(roots, return_inverse=True)
    # renumber so labels appear in row-major first-occurrence order
    first = np.full(labels.max() + 1, -1)
    order = []
    for lb in labels.tolist():
        if first[lb] < 0:
            first[lb] = len(order)
            order.append(lb)
    remap = np.empty_like(first)
    remap[np.array(order)] = np.arange(len(order))
    return remap[labels].reshape(h, w)


def compute_region_stats(labels: np.ndarray, lab: LabImage, hsv: HsvImage) -> list[RegionStats]:
    """Per-region areas, perimeters, Lab sums, HSV sums and adjacency.

    Perimeter counts boundary unit edges, including sides on the image
    border, so the whole-image region has perimeter 2 (width + height).
    """
    n = int(labels.max()) + 1
    flat = labels.ravel()
    area = np.bincount(flat, minlength=n)
    labpx = np.asarray(lab.pixels, dtype=np.float64)
    hsvpx = np.asarray(hsv.pixels, dtype=np.float64)
    lab_sum = np.stack(
        [np.bincount(flat, weights=labpx[..., c].ravel(), minlength=n) for c in range(3)],
        axis=1,
    )
    lab_sumsq = np.stack(
        [np.bincount(flat, weights=(labpx[..., c] ** 2).ravel(), minlength=n) for c in range(3)],
        axis=1,
    )
    hue = np.radians(hsvpx[..., 0].ravel())
    hue_cos = np.bincount(flat, weights=np.cos(hue), minlength=n)
    hue_sin = np.bincount(flat, weights=np.sin(hue), minlength=n)
    sat = np.bincount(flat, weights=hsvpx[..., 1].ravel(), minlength=n)
    val = np.bincount(flat, weights=hsvpx[..., 2].ravel(), minlength=n)

    perim = np.zeros(n, dtype=np.int64)
    pairs = {}
    for l1, l2 in (
        (labels[:, :-1], labels[:, 1:]),
        (labels[:-1, :], labels[1:, :]),
    ):
        diff = l1 != l2
        a, b = l1[diff], l2[diff]
        np.add.at(perim, a, 1)
        np.add.at(perim, b, 1)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys, counts = np.unique(lo.astype(np.int64) * n + hi, return_counts=True)
        for key, cnt in zip(keys.tolist(), counts.tolist()):
            pairs[key] = pairs.get(key, 0) + cnt
    for border in (labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]):
        np.add.at(perim, border, 1)

    regions = [
        RegionStats(
            label=i,
            area=int(area[i]),
            perimeter=int(perim[i]),
            lab_sum=lab_sum[i].copy(),
            lab_sumsq=lab_sumsq[i].copy(),
            hue_cos=float(hue_cos[i]),
            hue_sin=float(hue_sin[i]),
            sat_sum=float(sat[i]),
            val_sum=float(val[i]),
        )
        for i in range(n)
    ]
    for key, cnt in pairs.items():
        a, b = divmod(key, n)
        regions[a].neighbors[b] = cnt
        regions[b].neighbors[a] = cnt
    return regions


def make_segmentation(labels: np.ndarray, lab: LabImage, hsv: HsvImage) -> Segmentation:
    """Canonicalizes labels (area-descending rank, ties by first pixel)
    and attaches region statistics."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    area = np.bincount(flat, minlength=int(flat.max()) + 1)[uniq]
    order = np.lexsort((first, -area))
    remap = np.empty(int(flat.max()) + 1, dtype=labels.dtype)
    remap[uniq[order]] = np.arange(len(uniq), dtype=labels.dtype)
    relabeled = remap[labels]
    regions = compute_region_stats(relabeled, lab, hsv)
    return Segmentation(relabeled, regions, lab, hsv)


def segment_image(lab: LabImage, hsv: HsvImage, params: SegParams | None = None) -> Segmentation:
    """Stage-one segmentation with canonical labels and statistics."""
    if params is None:
        params = SegParams()
    return make_segmentation(felzenszwalb(lab, params), lab, hsv)


def fisher_distance(n_i, mean_i, var_i, n_j, mean_j, var_j, gates=(True, True, True)) -> float:
    """Max per-channel Fisher distance between two pixel populations."""
    fd = 0.0
    for k in range(3):
        if not gates[k]:
            continue
        dmu = abs(float(mean_i[k]) - float(mean_j[k]))
        denom = n_i * float(var_i[k]) + n_j * float(var_j[k])
        if denom == 0.0:
            fd_k = dmu
        else:
            fd_k = np.sqrt(n_i + n_j) * dmu / np.sqrt(denom)
        fd = max(fd, float(fd_k))
    return fd


def _region_fd(a: RegionStats, b: RegionStats, gates) -> float:
    # scalar fast path: outcome identical to fisher_distance, but run on
    # cached float moments because the merge loop calls this per heap push
    ma, mb = a.moments(), b.moments()
    na, nb = a.area, b.area
    root_n = math.sqrt(na + nb)
    fd = 0.0
    for k in range(3):
        if not gates[k]:
            continue
        dmu = abs(ma[k] - mb[k])
        denom = na * ma[k + 3] + nb * mb[k + 3]
        fd_k = dmu if denom == 0.0 else root_n * dmu / math.sqrt(denom)
        if fd_k > fd:
            fd = fd_k
    return fd


def _pooled(stats: list[RegionStats]):
    """(n, mean, var) of the union of the given regions' pixels."""
    n = sum(s.area for s in stats)
    total = np.zeros(3)
    totalsq = np.zeros(3)
    for s in stats:
        total += s.lab_sum
        totalsq += s.lab_sumsq
    mean = total / n
    var = np.maximum(totalsq / n - mean**2, 0.0)
    return n, mean, var


def _gates_pass(
    regions: dict[int, RegionStats], i: int, j: int, params: SegParams
) -> bool:
    """VGGP-style conditions for merging candidate j into region i."""
    ri, rj = regions[i], regions[j]
    t = params.fisher_threshold
    gates = params.channel_gates
    if _region_fd(ri, rj, gates) >= t:
        return False
    all_nb = [regions[n] for n in sorted(ri.neighbors)]
    n, mean, var = _pooled(all_nb)
    if fisher_distance(ri.area, ri.lab_mean, ri.lab_var, n, mean, var, gates) >= t:
        return False
    subset = [rj] + [
        regions[n] for n in sorted(ri.neighbors) if n != j and j in regions[n].neighbors
    ]
    n, mean, var = _pooled(subset)
    if fisher_distance(ri.area, ri.lab_mean, ri.lab_var, n, mean, var, gates) >= t:
        return False
    return True


def merge_regions(seg: Segmentation, params: SegParams | None = None) -> Segmentation:
    """Fisher-distance region merging; returns a fresh canonical segmentation."""
    if params is None:
        params = SegParams()
    regions: dict[int, RegionStats] = {}
    for r in seg.regions:
        regions[r.label] = RegionStats(
            label=r.label,
            area=r.area,
            perimeter=r.perimeter,
            lab_sum=r.lab_sum.copy(),
            lab_sumsq=r.lab_sumsq.copy(),
            hue_cos=r.hue_cos,
            hue_sin=r.hue_sin,
            sat_sum=r.sat_sum,
            val_sum=r.val_sum,
            neighbors=dict(r.neighbors),
        )
    version = {lbl: 0 for lbl in regions}
    alias = {lbl: lbl for lbl in regions}  # merged label -> surviving label
    # pairs that were close enough to merge but failed a gate; keyed by
    # both endpoints so a neighborhood change on either side re-arms them
    parked: dict[int, set[tuple[int, int]]] = {lbl: set() for lbl in regions}

    def push_pair(heap, a: int, b: int):
        if a > b:
            a, b = b, a
        fd = _region_fd(regions[a], regions[b], params.channel_gates)
        if fd < params.fisher_threshold:
            # pairs at or past the threshold can only become mergeable
            # after one side's stats change, which pushes them again
            heapq.heappush(heap, (fd, a, b, version[a], version[b]))

    heap: list = []
    seen = set()
    for lbl, r in regions.items():
        for nb in r.neighbors:
            if (min(lbl, nb), max(lbl, nb)) not in seen:
                seen.add((min(lbl, nb), max(lbl, nb)))
                push_pair(heap, lbl, nb)

    while heap:
        fd, a, b, va, vb = heapq.heappop(heap)
        if fd >= params.fisher_threshold:
            break  # nothing mergeable remains
        if a not in regions or b not in regions:
            continue
        if version[a] != va or version[b] != vb:
            continue
        if b not in regions[a].neighbors:
            continue
        if not (_gates_pass(regions, a, b, params) or _gates_pass(regions, b, a, params)):
            parked[a].add((a, b))
            parked[b].add((a, b))
            continue
        ra, rb = regions[a], regions[b]
        shared = ra.neighbors.pop(b)
        rb.neighbors.pop(a)
        ra.area += rb.area
        ra.perimeter += rb.perimeter - 2 * shared
        ra.lab_sum += rb.lab_sum
        ra.lab_sumsq += rb.lab_sumsq
        ra.hue_cos += rb.hue_cos
        ra.hue_sin += rb.hue_sin
        ra.sat_sum += rb.sat_sum
        ra.val_sum += rb.val_sum
        ra.invalidate()
        for nb, cnt in rb.neighbors.items():
            regions[nb].neighbors.pop(b)
            regions[nb].neighbors[a] = regions[nb].neighbors.get(a, 0) + cnt
            ra.neighbors[nb] = ra.neighbors.get(nb, 0) + cnt
        del regions[b]
        alias[b] = a
        version[a] += 1
        version[b] += 1
        # the survivor's stats changed: refresh its own pairs; any pair
        # parked on a region whose neighborhood was rewired (the survivor
        # and everything now adjacent to it) gets re-armed, since a gate
        # that failed on the old pooled context may pass on the new one
        to_push = set()
        for nb in ra.neighbors:
            to_push.add((min(a, nb), max(a, nb)))
        for x in (a, *ra.neighbors):
            if parked[x]:
                to_push.update(parked[x])
                parked[x].clear()
        for x, y in sorted(to_push):
            if x in regions and y in regions and y in regions[x].neighbors:
                push_pair(heap, x, y)

    def resolve(lbl: int) -> int:
        while alias[lbl] != lbl:
            lbl = alias[lbl]
        return lbl

    lut = np.array([resolve(lbl) for lbl in range(len(seg.regions))])
    merged = lut[seg.labels]
    return make_segmentation(merged, seg.lab, seg.hsv)
