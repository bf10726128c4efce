####################################################################################################
# Anchor search for unreliable pixels.
#
# The neighbourhood of p is cut into `num_sectors` fixed-angle sectors. In each sector a fan of
# `candidates_per_sector` rays is marched outward; every ray keeps its first reliable hit inside
# p's atlas region. One anchor per sector is then chosen so that the polygon spanned by the
# anchors around p is as large as possible.
#
# Everything works on batches of pixels: candidate arrays are (N, S, X, ...) and anchor arrays
# (N, S, ...), with S sectors and X candidates per sector.
####################################################################################################
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg

logger = root_cfg.setup_logger("mvs_core")

CHUNK_PIXELS = 16384
# Half-width of the window whose majority label a boundary center adopts
BOUNDARY_LABEL_RADIUS = 2


@dataclass(frozen=True)
class AnchorParams:
    num_sectors: int = 8
    candidates_per_sector: int = 4
    anchor_search_radius: int = 64
    use_area_max: bool = True

    @classmethod
    def from_cfg(cls, cfg: MvsCfg) -> "AnchorParams":
        return cls(cfg.num_sectors, cfg.candidates_per_sector, cfg.anchor_search_radius, cfg.use_area_max)


@dataclass
class SectorCandidates:
    """Reliable candidates per sector, nearest first.

    pixels: (N, S, X, 2) integer (x, y); valid: (N, S, X); distance and cost: (N, S, X).
    """
    centers: np.ndarray
    pixels: np.ndarray
    valid: np.ndarray
    distance: np.ndarray
    cost: np.ndarray

    @property
    def num_sectors(self) -> int:
        return self.pixels.shape[1]


@dataclass
class AnchorSet:
    """At most one anchor per sector. pixels: (N, S, 2); valid: (N, S)."""
    pixels: np.ndarray
    valid: np.ndarray

    @classmethod
    def empty(cls, n: int, num_sectors: int) -> "AnchorSet":
        return cls(np.zeros((n, num_sectors, 2), dtype=np.intp), np.zeros((n, num_sectors), dtype=bool))

    def count(self) -> np.ndarray:
        return self.valid.sum(axis=-1)


def ray_directions(num_sectors: int, rays_per_sector: int) -> np.ndarray:
    """(S, X, 2) unit directions; ray r of sector s sits at angle (s + (r + 0.5) / X) * 360 / S."""
    s = np.arange(num_sectors)[:, None]
    r = np.arange(rays_per_sector)[None, :]
    theta = np.deg2rad((s + (r + 0.5) / rays_per_sector) * 360.0 / num_sectors)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def sector_of(offset: np.ndarray, num_sectors: int = 8) -> np.ndarray:
    """Sector index floor(angle / sector width) of pixel offsets (..., 2)."""
    angle = np.degrees(np.arctan2(offset[..., 1], offset[..., 0])) % 360.0
    return np.floor(angle / (360.0 / num_sectors)).astype(np.intp) % num_sectors


############################################################################################
# Candidate collection
############################################################################################
def center_labels(centers: np.ndarray, labels: np.ndarray, radius: int = BOUNDARY_LABEL_RADIUS) -> np.ndarray:
    """Atlas label of each center. Boundary centers (label 0) take the most frequent non-zero label
    of the surrounding window, the smallest one on ties, and stay 0 when the window has none."""
    centers = np.asarray(centers, dtype=np.intp).reshape(-1, 2)
    own = labels[centers[:, 1], centers[:, 0]].copy()
    todo = np.flatnonzero(own == 0)
    if todo.size == 0:
        return own
    h, w = labels.shape
    offsets = np.arange(-radius, radius + 1)
    wy = np.clip(centers[todo, 1, None, None] + offsets[None, :, None], 0, h - 1)
    wx = np.clip(centers[todo, 0, None, None] + offsets[None, None, :], 0, w - 1)
    window = labels[wy, wx].reshape(todo.size, -1).astype(np.float64)
    window[window == 0] = np.nan
    labelled = ~np.all(np.isnan(window), axis=1)
    if labelled.any():
        majority = stats.mode(window[labelled], axis=1, nan_policy="omit", keepdims=False).mode
        own[todo[labelled]] = np.asarray(majority).astype(own.dtype)
    return own


def collect_candidates(centers: np.ndarray,
                       reliable: np.ndarray,
                       cost: np.ndarray,
                       labels: Optional[np.ndarray] = None,
                       params: AnchorParams = AnchorParams()) -> SectorCandidates:
    """Collect per-sector reliable candidates around each center pixel.

    Args:
        centers: (N, 2) integer pixels.
        reliable: (H, W) reliability map.
        cost: (H, W) stored costs, used for tie-breaking.
        labels: Optional atlas labels. Candidates must share the center's label, with boundary
            centers resolved by center_labels(); a boundary center with no labelled pixel nearby is
            unrestricted. Rays march past pixels of other regions.
    """
    centers = np.asarray(centers, dtype=np.intp).reshape(-1, 2)
    n = len(centers)
    s_count, x_count = params.num_sectors, params.candidates_per_sector
    pixels = np.zeros((n, s_count, x_count, 2), dtype=np.intp)
    valid = np.zeros((n, s_count, x_count), dtype=bool)
    distance = np.full((n, s_count, x_count), np.inf)
    dirs = ray_directions(s_count, x_count)
    steps = np.arange(1, params.anchor_search_radius + 1)
    h, w = reliable.shape

    for start in range(0, n, CHUNK_PIXELS):
        sl = slice(start, min(start + CHUNK_PIXELS, n))
        cx, cy = centers[sl, 0], centers[sl, 1]
        own = center_labels(centers[sl], labels) if labels is not None else None
        for s in range(s_count):
            for r in range(x_count):
                qx = np.rint(cx[:, None] + steps[None, :] * dirs[s, r, 0]).astype(np.intp)
                qy = np.rint(cy[:, None] + steps[None, :] * dirs[s, r, 1]).astype(np.intp)
                inb = (qx >= 0) & (qx < w) & (qy >= 0) & (qy < h)
                qxc, qyc = np.clip(qx, 0, w - 1), np.clip(qy, 0, h - 1)
                hit = inb & reliable[qyc, qxc]
                if own is not None:
                    hit &= (own[:, None] == 0) | (labels[qyc, qxc] == own[:, None])
                found = hit.any(axis=1)
                first = np.argmax(hit, axis=1)
                rows = np.arange(len(cx))
                px = qxc[rows, first]
                py = qyc[rows, first]
                pixels[sl, s, r, 0] = px
                pixels[sl, s, r, 1] = py
                valid[sl, s, r] = found
                distance[sl, s, r] = np.where(found, np.hypot(px - cx, py - cy), np.inf)

    # Rays of a sector can land on the same pixel; keep the first
    for r in range(1, x_count):
        for q in range(r):
            same = np.all(pixels[:, :, r] == pixels[:, :, q], axis=-1) & valid[:, :, q]
            valid[:, :, r] &= ~same
    distance = np.where(valid, distance, np.inf)

    order = np.argsort(distance, axis=-1, kind="stable")
    pixels = np.take_along_axis(pixels, order[..., None], axis=2)
    valid = np.take_along_axis(valid, order, axis=2)
    distance = np.take_along_axis(distance, order, axis=2)
    cand_cost = np.where(valid, cost[pixels[..., 1], pixels[..., 0]], np.inf)
    return SectorCandidates(centers, pixels, valid, distance, cand_cost)


############################################################################################
# Area-maximising selection
############################################################################################
def triangle_area(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Area of triangle (p, a, b) from the 2D cross product."""
    ua = np.asarray(a, dtype=np.float64) - p
    ub = np.asarray(b, dtype=np.float64) - p
    return np.abs(ua[..., 0] * ub[..., 1] - ua[..., 1] * ub[..., 0]) / 2.0


def area_gain(p: np.ndarray, prev: np.ndarray, c: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    """Polygon area added by inserting c between its neighbours prev and nxt."""
    return triangle_area(p, prev, c) + triangle_area(p, c, nxt) - triangle_area(p, prev, nxt)


def _pick(valid: np.ndarray, keys: list[np.ndarray]) -> np.ndarray:
    """Index of the lexicographically smallest key tuple among valid entries along the last axis."""
    best = np.zeros(valid.shape[:-1], dtype=np.intp)
    remaining = valid.copy()
    for key in keys:
        masked = np.where(remaining, key, np.inf)
        low = masked.min(axis=-1, keepdims=True)
        remaining &= masked == low
    any_left = remaining.any(axis=-1)
    best[any_left] = np.argmax(remaining[any_left], axis=-1)
    return best


def select_area_max(candidates: SectorCandidates, use_area_max: bool = True) -> AnchorSet:
    """Choose one anchor per sector.

    Each sector starts at its nearest candidate. Sectors are then swept once in angular order; a
    sector whose two neighbours both hold anchors takes the candidate with the largest area gain
    (ties: lower cost, then nearer). A sector with a missing neighbour takes its farthest candidate.
    """
    n, s_count = candidates.valid.shape[:2]
    p = candidates.centers.astype(np.float64)
    has = candidates.valid.any(axis=-1)
    chosen = np.zeros((n, s_count), dtype=np.intp)

    if use_area_max:
        for s in range(s_count):
            prev_s, next_s = (s - 1) % s_count, (s + 1) % s_count
            prev = np.take_along_axis(candidates.pixels[:, prev_s], chosen[:, prev_s, None, None], axis=1)[:, 0]
            nxt = np.take_along_axis(candidates.pixels[:, next_s], chosen[:, next_s, None, None], axis=1)[:, 0]
            both = has[:, prev_s] & has[:, next_s]
            gain = area_gain(p[:, None], prev[:, None].astype(np.float64), candidates.pixels[:, s].astype(np.float64),
                             nxt[:, None].astype(np.float64))
            ok = candidates.valid[:, s]
            by_area = _pick(ok, [-gain, candidates.cost[:, s], candidates.distance[:, s]])
            farthest = _pick(ok, [-candidates.distance[:, s]])
            chosen[:, s] = np.where(both, by_area, farthest)

    pixels = np.take_along_axis(candidates.pixels, chosen[:, :, None, None], axis=2)[:, :, 0]
    return AnchorSet(pixels, has)


############################################################################################
# Visibility filter
############################################################################################
def filter_visibility(anchors: AnchorSet, weights: np.ndarray) -> np.ndarray:
    """Per-view anchor mask (N, V, S): an anchor is kept for view j when w'_j(anchor) > 0.

    Args:
        weights: (H, W, V) effective visibility weights of the reference view.
    """
    w = weights[anchors.pixels[..., 1], anchors.pixels[..., 0]]
    return np.transpose((w > 0) & anchors.valid[..., None], (0, 2, 1))


def build_anchors(centers: np.ndarray,
                  reliable: np.ndarray,
                  cost: np.ndarray,
                  labels: Optional[np.ndarray],
                  params: AnchorParams) -> AnchorSet:
    candidates = collect_candidates(centers, reliable, cost, labels, params)
    anchors = select_area_max(candidates, params.use_area_max)
    if len(centers):
        logger.debug(f"Anchors: {anchors.count().mean():.2f} per unreliable pixel over {len(centers)} pixels")
    return anchors
