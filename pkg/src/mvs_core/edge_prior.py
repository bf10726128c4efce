####################################################################################################
# Depth-normal-edge aligned prior.
#
# Roberts edges split the image into dispersed regions. Regions of at least `eta` pixels are
# planarized with RANSAC on the back-projected monocular depth. An erosion sweep splits regions
# that straddle a crease; a dilation sweep merges coplanar neighbours split by texture edges.
# Finally, boundary pixels close to an adjacent region's plane are absorbed into that region.
#
# Plane fits live in the monocular-depth camera frame: n.P + offset = 0 with offset > 0.
####################################################################################################
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from mvs_core import configuration as root_cfg
from mvs_core import file_naming
from mvs_core.config_objects import MvsCfg
from mvs_core.errors import GeometryError
from mvs_core.geometry import pixel_rays
from mvs_core.scene_io import CameraView, PriorBundle

logger = root_cfg.setup_logger("mvs_core")

_CROSS = cv2.getStructuringElement(cv2.MORPH_CROSS, (3, 3))
# |dx| + |dy| <= 2
_DIAMOND = np.array([[0, 0, 1, 0, 0],
                     [0, 1, 1, 1, 0],
                     [1, 1, 1, 1, 1],
                     [0, 1, 1, 1, 0],
                     [0, 0, 1, 0, 0]], dtype=np.uint8)
_FOUR_NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class PlaneFit:
    normal: np.ndarray
    offset: float
    inlier_ratio: float

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)


@dataclass
class RegionRecord:
    pixel_count: int
    # None for regions below eta pixels (unplanarized)
    plane: Optional[PlaneFit] = None


@dataclass
class RegionAtlas:
    """Per-pixel region labels (0 = boundary) plus a fitted plane per region."""
    labels: np.ndarray
    regions: dict[int, RegionRecord] = field(default_factory=dict)

    def next_label(self) -> int:
        return max(self.regions.keys(), default=0) + 1

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label

    def copy(self) -> "RegionAtlas":
        return RegionAtlas(self.labels.copy(), {k: RegionRecord(r.pixel_count, r.plane)
                                                for k, r in self.regions.items()})

    def compact(self) -> None:
        """Relabel regions as 1..K in order of their current label."""
        old = sorted(self.regions.keys())
        lut = np.zeros(int(self.labels.max(initial=0)) + 1, dtype=np.int32)
        for new, k in enumerate(old, start=1):
            lut[k] = new
        self.labels = lut[self.labels]
        self.regions = {new: self.regions[k] for new, k in enumerate(old, start=1)}


@dataclass(frozen=True)
class AtlasParams:
    eta: int = 300
    varphi: float = 0.5
    phi: float = 0.4
    gamma: float = 1.2
    kappa: float = 0.7
    delta: float = 0.8
    eps_grad: float = 0.005
    roberts_threshold: float = 0.0
    ransac_iterations: int = 256
    ransac_threshold_frac: float = 0.01
    ransac_max_points: int = 2000
    erosion_max_passes: int = 5
    atlas_rounds: int = 3
    normal_search_radius: int = 3
    filter_passes: int = 8
    use_normal_prior: bool = True
    use_erosion_dilation: bool = True
    use_pixel_filter: bool = True
    seed: int = 0

    @classmethod
    def from_cfg(cls, cfg: MvsCfg) -> "AtlasParams":
        return cls(**{name: getattr(cfg, name) for name in cls.__dataclass_fields__})


@dataclass
class AtlasContext:
    """Per-view monocular maps used while building the atlas."""
    points: np.ndarray
    valid: np.ndarray
    normals: np.ndarray
    phi_map: np.ndarray

    @classmethod
    def from_priors(cls, view: CameraView, priors: PriorBundle, params: AtlasParams) -> "AtlasContext":
        ys, xs = np.mgrid[0 : view.height, 0 : view.width]
        rays = pixel_rays(view.K, np.stack([xs, ys], axis=-1))
        points = rays * priors.mono_depth[..., None]
        phi_map = normal_similarity_map(priors.mono_normal, params.normal_search_radius)
        return cls(points, priors.mono_depth > 0, priors.mono_normal, phi_map)


############################################################################################
# Edges and dispersed regions
############################################################################################
def roberts_edges(image: np.ndarray, threshold: float = 0.0, eps_grad: float = 0.005) -> np.ndarray:
    """Binary edge map from the 2x2 Roberts cross.

    Args:
        threshold: Gradient-magnitude threshold; 0 selects Otsu on the magnitudes.
        eps_grad: Magnitudes at or below this floor are never edges.
    """
    img = np.asarray(image, dtype=np.float32)
    k1 = np.array([[1, 0], [0, -1]], dtype=np.float32)
    k2 = np.array([[0, 1], [-1, 0]], dtype=np.float32)
    g1 = cv2.filter2D(img, -1, k1, anchor=(0, 0), borderType=cv2.BORDER_REPLICATE)
    g2 = cv2.filter2D(img, -1, k2, anchor=(0, 0), borderType=cv2.BORDER_REPLICATE)
    mag = np.sqrt(g1.astype(np.float64) ** 2 + g2.astype(np.float64) ** 2)
    peak = mag.max(initial=0.0)
    if peak <= eps_grad:
        return np.zeros(img.shape, dtype=bool)
    if threshold <= 0:
        scaled = np.clip(np.rint(mag / peak * 255.0), 0, 255).astype(np.uint8)
        otsu, _ = cv2.threshold(scaled, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)
        threshold = otsu / 255.0 * peak
    return mag > max(threshold, eps_grad)


def label_regions(edge_map: np.ndarray) -> np.ndarray:
    """4-connected components of non-edge pixels; edge pixels get label 0."""
    _, labels = cv2.connectedComponents((~edge_map).astype(np.uint8), connectivity=4, ltype=cv2.CV_32S)
    return labels.astype(np.int32)


############################################################################################
# Planes
############################################################################################
def fit_plane(points: np.ndarray,
              rng: np.random.Generator,
              iterations: int = 256,
              threshold_frac: float = 0.01,
              max_points: int = 2000) -> PlaneFit:
    """RANSAC plane through camera-frame points with an SVD refit on the inliers.

    The inlier threshold is threshold_frac times the median point depth.

    Raises:
        GeometryError: fewer than 3 points.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    m = len(points)
    if m < 3:
        raise GeometryError(f"Plane fit needs at least 3 points, got {m}")
    scale = float(np.median(np.abs(points[:, 2])))
    if scale <= 0:
        scale = float(np.mean(np.linalg.norm(points, axis=1))) or 1.0
    thr = threshold_frac * scale

    score_pts = points if m <= max_points else points[rng.choice(m, max_points, replace=False)]
    idx = rng.integers(0, m, size=(iterations, 3))
    a, b, c = points[idx[:, 0]], points[idx[:, 1]], points[idx[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12 * scale * scale
    normals = normals / np.where(ok, norms, 1.0)[:, None]
    offsets = -np.sum(normals * a, axis=1)
    counts = (np.abs(score_pts @ normals.T + offsets) <= thr).sum(axis=0)
    counts[~ok] = -1

    if counts.max() < 0:
        n, d = _svd_plane(points)
    else:
        best = int(np.argmax(counts))
        n, d = normals[best], float(offsets[best])
    ratio = float(np.mean(np.abs(points @ n + d) <= thr))

    inliers = np.abs(points @ n + d) <= thr
    if inliers.sum() >= 3:
        n_ref, d_ref = _svd_plane(points[inliers])
        ratio_ref = float(np.mean(np.abs(points @ n_ref + d_ref) <= thr))
        if ratio_ref >= ratio:
            n, d, ratio = n_ref, d_ref, ratio_ref

    if d < 0:
        n, d = -n, -d
    return PlaneFit(np.asarray(n, dtype=np.float64), float(d), ratio)


def _svd_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    n = vt[-1]
    return n, float(-n @ centroid)


def ransac_plane(pixels: np.ndarray,
                 mono_depth: np.ndarray,
                 K: np.ndarray,
                 params: AtlasParams = AtlasParams(),
                 rng: Optional[np.random.Generator] = None) -> PlaneFit:
    """Fit a plane to region pixels (N, 2) back-projected with the monocular depth."""
    pixels = np.asarray(pixels).reshape(-1, 2)
    depth = mono_depth[pixels[:, 1], pixels[:, 0]]
    keep = depth > 0
    points = pixel_rays(K, pixels[keep]) * depth[keep, None]
    if rng is None:
        rng = np.random.default_rng(params.seed)
    return fit_plane(points, rng, params.ransac_iterations, params.ransac_threshold_frac,
                     params.ransac_max_points)


def plane_similarity(a: PlaneFit, b: PlaneFit) -> float:
    """n_a.n_b - min(1, |offset_a - offset_b|)."""
    return float(np.dot(a.normal, b.normal) - min(1.0, abs(a.offset - b.offset)))


############################################################################################
# Normal similarity
############################################################################################
def normal_similarity_map(normals: np.ndarray, radius: int) -> np.ndarray:
    """Minimum dot product between each normal and those up to `radius` pixels away along the
    four axis directions. Neighbours outside the image are ignored."""
    h, w = normals.shape[:2]
    out = np.ones((h, w))
    for t in range(1, radius + 1):
        if t < w:
            dot = np.sum(normals[:, :-t] * normals[:, t:], axis=-1)
            out[:, :-t] = np.minimum(out[:, :-t], dot)
            out[:, t:] = np.minimum(out[:, t:], dot)
        if t < h:
            dot = np.sum(normals[:-t] * normals[t:], axis=-1)
            out[:-t] = np.minimum(out[:-t], dot)
            out[t:] = np.minimum(out[t:], dot)
    return out


def normal_similarity(p: tuple[int, int], normals: np.ndarray, radius: int) -> float:
    x, y = p
    h, w = normals.shape[:2]
    best = 1.0
    for dx, dy in _FOUR_NEIGHBOURS:
        for t in range(1, radius + 1):
            qx, qy = x + dx * t, y + dy * t
            if 0 <= qx < w and 0 <= qy < h:
                best = min(best, float(np.dot(normals[y, x], normals[qy, qx])))
    return best


############################################################################################
# Region helpers
############################################################################################
def _bbox(mask: np.ndarray, margin: int) -> tuple[slice, slice]:
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    return (slice(max(ys.min() - margin, 0), min(ys.max() + margin + 1, h)),
            slice(max(xs.min() - margin, 0), min(xs.max() + margin + 1, w)))


def _region_rng(mask: np.ndarray, seed: int) -> np.random.Generator:
    flat = np.flatnonzero(mask)
    return np.random.default_rng([seed, int(flat[0]) if flat.size else 0, int(flat.size)])


def fit_region(mask: np.ndarray, ctx: AtlasContext, params: AtlasParams) -> Optional[PlaneFit]:
    """Plane fit for a region mask, or None when it is below eta pixels."""
    if mask.sum() < params.eta:
        return None
    keep = mask & ctx.valid
    if keep.sum() < 3:
        return None
    return fit_plane(ctx.points[keep], _region_rng(mask, params.seed), params.ransac_iterations,
                     params.ransac_threshold_frac, params.ransac_max_points)


def refit_all(atlas: RegionAtlas, ctx: AtlasContext, params: AtlasParams) -> None:
    counts = np.bincount(atlas.labels.ravel())
    atlas.regions = {}
    for label in np.flatnonzero(counts):
        if label == 0:
            continue
        mask = atlas.labels == label
        atlas.regions[int(label)] = RegionRecord(int(counts[label]), fit_region(mask, ctx, params))


def _geodesic_partition(region: np.ndarray, seed_a: np.ndarray, seed_b: np.ndarray) -> np.ndarray:
    """Grow two seeds inside `region` breadth-first; returns 1/2 per pixel (0 outside). Ties go to a."""
    lab = np.zeros(region.shape, dtype=np.uint8)
    lab[seed_a] = 1
    lab[seed_b & ~seed_a] = 2
    while True:
        free = region & (lab == 0)
        grow_a = cv2.dilate((lab == 1).astype(np.uint8), _CROSS).astype(bool) & free
        grow_b = cv2.dilate((lab == 2).astype(np.uint8), _CROSS).astype(bool) & free & ~grow_a
        if not grow_a.any() and not grow_b.any():
            break
        lab[grow_a] = 1
        lab[grow_b] = 2
    lab[region & (lab == 0)] = 1
    return lab


def _shared_boundary(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    da = cv2.dilate(a.astype(np.uint8), _CROSS).astype(bool)
    db = cv2.dilate(b.astype(np.uint8), _CROSS).astype(bool)
    return (da & b) | (db & a)


############################################################################################
# Erosion and dilation
############################################################################################
@dataclass
class SplitResult:
    mask_i: np.ndarray
    mask_j: np.ndarray
    fit_i: PlaneFit
    fit_j: PlaneFit


@dataclass
class MergeResult:
    mask: np.ndarray
    fit: Optional[PlaneFit]


def try_erode_split(label: int,
                    atlas: RegionAtlas,
                    ctx: AtlasContext,
                    params: AtlasParams) -> Optional[SplitResult]:
    """Pre-divide a region by erosion and accept the split when the two halves are dissimilar
    planes, fit better than the whole and meet along a normal discontinuity.

    Returns:
        The split (full-image masks), or None when the region stays unchanged.
    """
    record = atlas.regions.get(label)
    if record is None or record.plane is None:
        return None
    full = atlas.labels == label
    rows, cols = _bbox(full, 1)
    region = full[rows, cols]

    seed = region & (ctx.phi_map[rows, cols] >= params.phi) if params.use_normal_prior else region.copy()
    comp = None
    for _ in range(params.erosion_max_passes + 1):
        n, comp = cv2.connectedComponents(seed.astype(np.uint8), connectivity=4)
        if n - 1 >= 2:
            break
        seed = cv2.erode(seed.astype(np.uint8), _CROSS).astype(bool)
        comp = None
    if comp is None:
        return None

    sizes = np.bincount(comp.ravel())
    sizes[0] = 0
    order = np.argsort(-sizes, kind="stable")
    part = _geodesic_partition(region, comp == order[0], comp == order[1])

    mask_i = np.zeros_like(full)
    mask_j = np.zeros_like(full)
    mask_i[rows, cols] = part == 1
    mask_j[rows, cols] = part == 2
    fit_i = fit_region(mask_i, ctx, params)
    fit_j = fit_region(mask_j, ctx, params)
    if fit_i is None or fit_j is None:
        return None

    psi = plane_similarity(fit_i, fit_j)
    r_k = record.plane.inlier_ratio
    improvement = (fit_i.inlier_ratio + fit_j.inlier_ratio) / (2.0 * r_k) if r_k > 0 else np.inf
    accepted = psi <= params.varphi and improvement >= params.gamma
    if accepted and params.use_normal_prior:
        boundary = _shared_boundary(mask_i[rows, cols], mask_j[rows, cols])
        accepted = bool(boundary.any()) and float(ctx.phi_map[rows, cols][boundary].mean()) <= params.phi
    if not accepted:
        return None
    return SplitResult(mask_i, mask_j, fit_i, fit_j)


def try_dilate_merge(u: int,
                     v: int,
                     atlas: RegionAtlas,
                     ctx: AtlasContext,
                     params: AtlasParams) -> Optional[MergeResult]:
    """Pre-merge two adjacent regions by dilation and accept when both fits are confident, the
    planes are similar and the normals across the gap are smooth.

    Returns:
        The merged region (including absorbed boundary pixels), or None when unchanged.
    """
    ru, rv = atlas.regions.get(u), atlas.regions.get(v)
    if ru is None or rv is None or ru.plane is None or rv.plane is None:
        return None
    if ru.plane.inlier_ratio < params.kappa or rv.plane.inlier_ratio < params.kappa:
        return None
    if plane_similarity(ru.plane, rv.plane) < params.varphi:
        return None

    both = (atlas.labels == u) | (atlas.labels == v)
    rows, cols = _bbox(both, 2)
    labels = atlas.labels[rows, cols]
    mu, mv = labels == u, labels == v
    du = cv2.dilate(mu.astype(np.uint8), _DIAMOND).astype(bool)
    dv = cv2.dilate(mv.astype(np.uint8), _DIAMOND).astype(bool)
    gap = du & dv & ((labels == 0) | mu | mv)
    if not gap.any():
        return None
    if params.use_normal_prior and float(ctx.phi_map[rows, cols][gap].mean()) < params.phi:
        return None

    merged = np.zeros(atlas.labels.shape, dtype=bool)
    merged[rows, cols] = mu | mv | (gap & (labels == 0))
    return MergeResult(merged, fit_region(merged, ctx, params))


def adjacent_pairs(labels: np.ndarray) -> list[tuple[int, int]]:
    """Region pairs within diamond distance 2 of each other, as sorted (low, high) tuples."""
    h, w = labels.shape
    found = []
    for dy in range(0, 3):
        for dx in range(-2, 3):
            if abs(dx) + abs(dy) == 0 or abs(dx) + abs(dy) > 2 or (dy == 0 and dx < 0):
                continue
            a = labels[0 : h - dy, max(0, -dx) : w - max(0, dx)]
            b = labels[dy:h, max(0, dx) : w - max(0, -dx)]
            m = (a > 0) & (b > 0) & (a != b)
            if m.any():
                found.append(np.stack([np.minimum(a[m], b[m]), np.maximum(a[m], b[m])], axis=1))
    if not found:
        return []
    pairs = np.unique(np.concatenate(found), axis=0)
    return [(int(p[0]), int(p[1])) for p in pairs]


def _erosion_sweep(atlas: RegionAtlas, ctx: AtlasContext, params: AtlasParams) -> int:
    splits = 0
    by_size = sorted(atlas.regions.items(), key=lambda kv: (-kv[1].pixel_count, kv[0]))
    for label, _ in by_size:
        result = try_erode_split(label, atlas, ctx, params)
        if result is None:
            continue
        new_label = atlas.next_label()
        atlas.labels[result.mask_j] = new_label
        atlas.regions[label] = RegionRecord(int(result.mask_i.sum()), result.fit_i)
        atlas.regions[new_label] = RegionRecord(int(result.mask_j.sum()), result.fit_j)
        splits += 1
    return splits


def _dilation_sweep(atlas: RegionAtlas, ctx: AtlasContext, params: AtlasParams) -> int:
    merges = 0
    pairs = adjacent_pairs(atlas.labels)
    pairs.sort(key=lambda p: (-(atlas.regions[p[0]].pixel_count + atlas.regions[p[1]].pixel_count), p))
    for u, v in pairs:
        if u not in atlas.regions or v not in atlas.regions:
            continue
        result = try_dilate_merge(u, v, atlas, ctx, params)
        if result is None:
            continue
        keep, drop = (u, v) if atlas.regions[u].pixel_count >= atlas.regions[v].pixel_count else (v, u)
        atlas.labels[result.mask] = keep
        atlas.regions[keep] = RegionRecord(int(result.mask.sum()), result.fit)
        del atlas.regions[drop]
        merges += 1
    return merges


def erosion_dilation(atlas: RegionAtlas, ctx: AtlasContext, params: AtlasParams, rounds: int) -> int:
    """Alternate erosion and dilation sweeps until a round changes nothing; returns the change count."""
    total = 0
    for r in range(rounds):
        splits = _erosion_sweep(atlas, ctx, params)
        merges = _dilation_sweep(atlas, ctx, params)
        logger.debug(f"Atlas round {r}: {splits} splits, {merges} merges")
        total += splits + merges
        if splits + merges == 0:
            break
    return total


############################################################################################
# Pixel filtering
############################################################################################
def pixel_filter(p: tuple[int, int],
                 label: int,
                 atlas: RegionAtlas,
                 ctx: AtlasContext,
                 params: AtlasParams) -> int:
    """Region a boundary pixel joins when tested against an adjacent region, or 0 to stay boundary."""
    x, y = p
    record = atlas.regions.get(label)
    if record is None or record.plane is None or not ctx.valid[y, x]:
        return 0
    plane = record.plane
    close = float(plane.distance(ctx.points[y, x][None])[0]) <= params.delta
    smooth = not params.use_normal_prior or ctx.phi_map[y, x] >= params.phi
    if close and plane.inlier_ratio >= params.kappa and smooth:
        return label
    return 0


def filter_boundary_pixels(atlas: RegionAtlas, ctx: AtlasContext, params: AtlasParams) -> int:
    """Absorb boundary pixels into the adjacent region whose plane is nearest, repeated until no
    pixel moves or `filter_passes` is reached. Returns the number of pixels assigned."""
    max_label = int(atlas.labels.max(initial=0))
    normals = np.zeros((max_label + 1, 3))
    offsets = np.zeros(max_label + 1)
    usable = np.zeros(max_label + 1, dtype=bool)
    for label, record in atlas.regions.items():
        if record.plane is not None and record.plane.inlier_ratio >= params.kappa:
            normals[label] = record.plane.normal
            offsets[label] = record.plane.offset
            usable[label] = True

    smooth = ctx.phi_map >= params.phi if params.use_normal_prior else np.ones(atlas.labels.shape, dtype=bool)
    h, w = atlas.labels.shape
    assigned_total = 0
    for _ in range(params.filter_passes):
        labels = atlas.labels
        boundary = (labels == 0) & ctx.valid & smooth
        if not boundary.any():
            break
        best_dist = np.full((h, w), np.inf)
        best_label = np.zeros((h, w), dtype=np.int32)
        for dx, dy in _FOUR_NEIGHBOURS:
            nb = np.zeros((h, w), dtype=np.int32)
            nb[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)] = \
                labels[max(0, dy) : h - max(0, -dy), max(0, dx) : w - max(0, -dx)]
            cand = boundary & usable[nb]
            if not cand.any():
                continue
            dist = np.full((h, w), np.inf)
            dist[cand] = np.abs(np.sum(ctx.points[cand] * normals[nb[cand]], axis=-1) + offsets[nb[cand]])
            better = dist < best_dist
            best_dist[better] = dist[better]
            best_label[better] = nb[better]
        assign = best_dist <= params.delta
        count = int(assign.sum())
        if count == 0:
            break
        atlas.labels[assign] = best_label[assign]
        assigned_total += count

    counts = np.bincount(atlas.labels.ravel(), minlength=max_label + 1)
    for label, record in atlas.regions.items():
        record.pixel_count = int(counts[label])
    return assigned_total


############################################################################################
# Atlas
############################################################################################
def build_atlas(view: CameraView, priors: PriorBundle, params: AtlasParams) -> RegionAtlas:
    """Edges -> regions -> planes -> erosion/dilation -> pixel filtering."""
    ctx = AtlasContext.from_priors(view, priors, params)
    atlas = RegionAtlas(label_regions(priors.edge_map))
    refit_all(atlas, ctx, params)
    initial = len(atlas.regions)
    changes = 0
    if params.use_erosion_dilation:
        changes = erosion_dilation(atlas, ctx, params, params.atlas_rounds)
    assigned = filter_boundary_pixels(atlas, ctx, params) if params.use_pixel_filter else 0
    atlas.compact()
    planar = sum(1 for r in atlas.regions.values() if r.plane is not None)
    logger.info(f"view={view.id} atlas: {initial} dispersed regions -> {len(atlas.regions)} regions "
                f"({planar} planarized, {changes} splits/merges, {assigned} boundary pixels assigned)")
    return atlas


def refine_atlas(atlas: RegionAtlas, view: CameraView, priors: PriorBundle, params: AtlasParams) -> int:
    """Re-fit every region of an existing atlas and run one erosion/dilation round.

    Returns:
        The number of splits and merges performed; 0 means the atlas is a fixpoint.
    """
    ctx = AtlasContext.from_priors(view, priors, params)
    refit_all(atlas, ctx, params)
    return erosion_dilation(atlas, ctx, params, 1)


def dump_atlas(atlas: RegionAtlas, out_dir: Path | str, view_id: int) -> tuple[Path, Path]:
    """Write the label map as a 16-bit PNG and the region records as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label_file = file_naming.atlas_label_file(out_dir, view_id)
    if not cv2.imwrite(str(label_file), np.clip(atlas.labels, 0, 65535).astype(np.uint16)):
        raise OSError(f"Failed to write {label_file}")
    regions = {}
    for label, record in atlas.regions.items():
        entry: dict = {"pixel_count": record.pixel_count}
        if record.plane is not None:
            entry["normal"] = [float(v) for v in record.plane.normal]
            entry["offset"] = record.plane.offset
            entry["inlier_ratio"] = record.plane.inlier_ratio
        regions[str(label)] = entry
    regions_file = file_naming.atlas_regions_file(out_dir, view_id)
    with open(regions_file, "w", encoding="utf-8") as f:
        json.dump({"view": view_id, "regions": regions}, f, indent=2)
    return label_file, regions_file
