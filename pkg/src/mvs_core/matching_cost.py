####################################################################################################
# Photometric matching cost.
#
# The per-view cost is 1 - NCC over a sparse square patch, with bilateral sample weights
#   w(q) = exp(-|I(q) - I(p)| / sigma_color - ||q - p|| / sigma_spatial)
# evaluated on the reference image. Source samples come from the plane-induced homography and
# are read with bilinear interpolation. Costs lie in [0, 2]; MAX_COST means "no evidence".
#
# Everything is vectorised over pixels: callers pass arrays of centers and plane parameters.
####################################################################################################
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import map_coordinates

from mvs_core import api
from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.geometry import (
    PlaneHypothesis,
    apply_homographies,
    is_degenerate,
    pixel_rays,
    plane_dist,
    plane_homographies,
)
from mvs_core.scene_io import CameraView

logger = root_cfg.setup_logger("mvs_core")

# Pixels processed per vectorised block
CHUNK_PIXELS = 4096
# Variance below which a patch is treated as textureless
MIN_VARIANCE = 1e-10


@dataclass(frozen=True)
class PatchSpec:
    """Sparse square patch: `size` samples per side, `step` pixels apart."""
    size: int = 11
    step: int = 5

    def __post_init__(self) -> None:
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"Patch size must be a positive odd integer, got {self.size}")
        if self.step < 1:
            raise ValueError(f"Patch step must be positive, got {self.step}")

    def offsets(self) -> np.ndarray:
        """(M, 2) integer (dx, dy) sample offsets."""
        half = self.size // 2
        k = np.arange(-half, half + 1) * self.step
        dy, dx = np.meshgrid(k, k, indexing="ij")
        return np.stack([dx.ravel(), dy.ravel()], axis=-1)


@dataclass(frozen=True)
class CostParams:
    patch: PatchSpec
    sub_patch: PatchSpec
    sigma_color: float = 0.1
    sigma_spatial: float = 0.0
    max_dropped_frac: float = 0.5
    lam: float = 0.25

    @classmethod
    def from_cfg(cls, cfg: MvsCfg) -> "CostParams":
        return cls(
            patch=PatchSpec(cfg.patch_size, cfg.patch_step),
            sub_patch=PatchSpec(cfg.sub_patch_size, cfg.sub_patch_step),
            sigma_color=cfg.sigma_color,
            sigma_spatial=cfg.sigma_spatial,
            max_dropped_frac=cfg.max_dropped_frac,
            lam=cfg.lam,
        )

    def spatial_sigma(self, spec: PatchSpec) -> float:
        if self.sigma_spatial > 0:
            return self.sigma_spatial
        return spec.size * spec.step / 3.0


############################################################################################
# Single-view patch cost
############################################################################################
def _patch_costs_block(ref_image: np.ndarray,
                       src_image: np.ndarray,
                       ref_view: CameraView,
                       src_view: CameraView,
                       centers: np.ndarray,
                       normals: np.ndarray,
                       dists: np.ndarray,
                       spec: PatchSpec,
                       sigma_color: float,
                       sigma_spatial: float,
                       max_dropped_frac: float) -> np.ndarray:
    h, w = ref_image.shape
    offsets = spec.offsets()
    cx = np.clip(centers[:, 0], 0, w - 1).astype(np.intp)
    cy = np.clip(centers[:, 1], 0, h - 1).astype(np.intp)
    qx = np.clip(cx[:, None] + offsets[None, :, 0], 0, w - 1)
    qy = np.clip(cy[:, None] + offsets[None, :, 1], 0, h - 1)
    ref_vals = ref_image[qy, qx]
    center_vals = ref_image[cy, cx]
    spatial = np.linalg.norm(offsets, axis=1) / sigma_spatial
    weights = np.exp(-np.abs(ref_vals - center_vals[:, None]) / sigma_color - spatial[None, :])

    H = plane_homographies(normals, dists, ref_view, src_view)
    mapped, hw = apply_homographies(H, np.stack([qx, qy], axis=-1).astype(np.float64))
    sh, sw = src_image.shape
    mx, my = mapped[..., 0], mapped[..., 1]
    valid = (hw > 0) & np.isfinite(mx) & np.isfinite(my) & (mx >= 0) & (mx <= sw - 1) & (my >= 0) & (my <= sh - 1)
    src_vals = map_coordinates(src_image, [np.where(valid, my, 0.0).ravel(), np.where(valid, mx, 0.0).ravel()],
                               order=1, mode="nearest").reshape(valid.shape)

    wv = weights * valid
    sum_w = wv.sum(axis=1)
    safe_w = np.where(sum_w > 0, sum_w, 1.0)
    mean_r = (wv * ref_vals).sum(axis=1) / safe_w
    mean_s = (wv * src_vals).sum(axis=1) / safe_w
    dr = ref_vals - mean_r[:, None]
    ds = src_vals - mean_s[:, None]
    var_r = (wv * dr * dr).sum(axis=1) / safe_w
    var_s = (wv * ds * ds).sum(axis=1) / safe_w
    cov = (wv * dr * ds).sum(axis=1) / safe_w
    denom = np.sqrt(np.maximum(var_r * var_s, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ncc = np.clip(cov / denom, -1.0, 1.0)
    cost = np.clip(1.0 - ncc, 0.0, api.MAX_COST)

    # The center must see the plane in front of the camera
    center_rays = pixel_rays(ref_view.K, np.stack([cx, cy], axis=-1).astype(np.float64))
    facing = np.sum(normals * center_rays, axis=-1) < 0
    dropped = 1.0 - valid.mean(axis=1)
    bad = (
        (dists <= 0)
        | ~facing
        | is_degenerate(H)
        | (dropped > max_dropped_frac)
        | (sum_w <= 0)
        | (var_r < MIN_VARIANCE)
        | (var_s < MIN_VARIANCE)
        | ~np.isfinite(cost)
    )
    return np.where(bad, api.MAX_COST, cost)


def patch_costs(ref_image: np.ndarray,
                src_image: np.ndarray,
                ref_view: CameraView,
                src_view: CameraView,
                centers: np.ndarray,
                normals: np.ndarray,
                dists: np.ndarray,
                spec: PatchSpec,
                sigma_color: float = 0.1,
                sigma_spatial: float = 0.0,
                max_dropped_frac: float = 0.5) -> np.ndarray:
    """Per-pixel 1 - weighted NCC between the reference and one source view.

    Args:
        centers: (N, 2) integer patch centers in the reference image.
        normals: (N, 3) plane normals, reference camera frame.
        dists: (N,) plane offsets (n.X + dist = 0).
        spec: Patch layout.

    Returns:
        (N,) costs in [0, 2].
    """
    centers = np.asarray(centers).reshape(-1, 2)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    dists = np.asarray(dists, dtype=np.float64).reshape(-1)
    if sigma_spatial <= 0:
        sigma_spatial = spec.size * spec.step / 3.0
    out = np.empty(len(centers), dtype=np.float64)
    for start in range(0, len(centers), CHUNK_PIXELS):
        sl = slice(start, start + CHUNK_PIXELS)
        out[sl] = _patch_costs_block(ref_image, src_image, ref_view, src_view, centers[sl], normals[sl],
                                     dists[sl], spec, sigma_color, sigma_spatial, max_dropped_frac)
    return out


def ncc_cost(p: np.ndarray,
             h: PlaneHypothesis,
             spec: PatchSpec,
             view_i: CameraView,
             view_j: CameraView,
             sigma_color: float = 0.1,
             sigma_spatial: float = 0.0,
             max_dropped_frac: float = 0.5,
             use_corrected: bool = False) -> float:
    """Matching cost of hypothesis h at pixel p between views i and j."""
    p = np.asarray(p, dtype=np.float64).reshape(1, 2)
    n = np.asarray(h.n, dtype=np.float64).reshape(1, 3)
    dist = plane_dist(n, np.array([h.d]), p, view_i.K)
    cost = patch_costs(view_i.matching_image(use_corrected), view_j.matching_image(use_corrected),
                       view_i, view_j, np.rint(p).astype(np.intp), n, dist, spec, sigma_color,
                       sigma_spatial, max_dropped_frac)
    return float(cost[0])


############################################################################################
# Aggregation over views
############################################################################################
def multi_view_cost(costs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean over the last (view) axis; MAX_COST where the weights sum to zero."""
    costs = np.asarray(costs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum(axis=-1)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, (weights * costs).sum(axis=-1) / safe, api.MAX_COST)


def _anchor_means(anchor_costs: np.ndarray, anchor_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Sorted before summation so the result does not depend on anchor order
    masked = np.sort(np.where(anchor_mask, anchor_costs, 0.0), axis=-1)
    count = anchor_mask.sum(axis=-1)
    return masked.sum(axis=-1) / np.maximum(count, 1), count


def deformable_view_costs(center_costs: np.ndarray,
                          anchor_costs: np.ndarray,
                          anchor_mask: np.ndarray,
                          lam: float) -> np.ndarray:
    """Per-view deformable cost: lam * center + (1 - lam) * mean anchor cost; center alone without anchors.

    Args:
        center_costs: (..., V) whole-patch costs at p.
        anchor_costs: (..., V, S) sub-patch costs at the anchors, under p's plane.
        anchor_mask: (..., V, S) anchors retained per view.
    """
    mean, count = _anchor_means(anchor_costs, np.broadcast_to(anchor_mask, anchor_costs.shape))
    return np.where(count > 0, lam * center_costs + (1.0 - lam) * mean, center_costs)


def highlight_view_costs(anchor_costs: np.ndarray, anchor_mask: np.ndarray) -> np.ndarray:
    """Per-view cost from anchor sub-patches only; MAX_COST without anchors."""
    mean, count = _anchor_means(anchor_costs, np.broadcast_to(anchor_mask, anchor_costs.shape))
    return np.where(count > 0, mean, api.MAX_COST)


def deformable_cost(center_costs: np.ndarray,
                    anchor_costs: np.ndarray,
                    anchor_mask: np.ndarray,
                    lam: float,
                    weights: np.ndarray) -> np.ndarray:
    return multi_view_cost(deformable_view_costs(center_costs, anchor_costs, anchor_mask, lam), weights)


def highlight_cost(anchor_costs: np.ndarray, anchor_mask: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return multi_view_cost(highlight_view_costs(anchor_costs, anchor_mask), weights)


############################################################################################
# Reference-view evaluator
############################################################################################
class CostEvaluator:
    """Evaluates per-view costs of plane hypotheses for one reference view against its sources."""

    def __init__(self,
                 ref: CameraView,
                 sources: list[CameraView],
                 params: CostParams,
                 use_corrected: bool = False) -> None:
        self.ref = ref
        self.sources = sources
        self.params = params
        self.ref_image = ref.matching_image(use_corrected)
        self.src_images = [s.matching_image(use_corrected) for s in sources]

    @property
    def num_views(self) -> int:
        return len(self.sources)

    def view_costs(self,
                   centers: np.ndarray,
                   normals: np.ndarray,
                   dists: np.ndarray,
                   spec: Optional[PatchSpec] = None,
                   views: Optional[np.ndarray] = None) -> np.ndarray:
        """(N, V) costs of the planes (normals, dists) with patches centered on `centers`.

        Args:
            views: Optional (N, V) mask; unmasked entries are left at MAX_COST without evaluation.
        """
        spec = spec or self.params.patch
        sigma_spatial = self.params.spatial_sigma(spec)
        out = np.full((len(centers), self.num_views), api.MAX_COST)
        for j, (src, img) in enumerate(zip(self.sources, self.src_images)):
            rows = np.arange(len(centers)) if views is None else np.flatnonzero(views[:, j])
            if rows.size == 0:
                continue
            out[rows, j] = patch_costs(self.ref_image, img, self.ref, src, centers[rows], normals[rows],
                                       dists[rows], spec, self.params.sigma_color, sigma_spatial,
                                       self.params.max_dropped_frac)
        return out

    def anchor_costs(self,
                     anchors: np.ndarray,
                     anchor_mask: np.ndarray,
                     normals: np.ndarray,
                     dists: np.ndarray) -> np.ndarray:
        """(N, V, S) sub-patch costs at anchors under each pixel's plane.

        Args:
            anchors: (N, S, 2) anchor pixels.
            anchor_mask: (N, V, S) anchors retained per view; others stay at MAX_COST.
        """
        n, s_count = anchors.shape[:2]
        out = np.full((n, self.num_views, s_count), api.MAX_COST)
        for s in range(s_count):
            mask = anchor_mask[:, :, s]
            rows = np.flatnonzero(mask.any(axis=1))
            if rows.size == 0:
                continue
            out[rows, :, s] = self.view_costs(anchors[rows, s], normals[rows], dists[rows],
                                              self.params.sub_patch, mask[rows])
        return out
