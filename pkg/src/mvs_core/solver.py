####################################################################################################
# PatchMatch solver.
#
# Each view keeps one plane hypothesis (camera-space unit normal, z-depth) per pixel. A solve runs
# `outer_passes` passes; every pass
#   - weighs the source views per pixel (selection weights, restored by reprojection from the
#     second pass on, with the highlight rules applied),
#   - splits pixels into reliable and unreliable by their aggregated cost,
#   - builds anchors for unreliable pixels inside their atlas region (atlas built once),
#   - then alternates red-black propagation and refinement sweeps.
# A hypothesis is only ever replaced by one with a strictly lower cost.
#
# Views are solved in lock-step: every pass reads a frozen snapshot of the previous pass of all
# views, so views within a pass can run on a thread pool.
####################################################################################################
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from mvs_core import api, file_naming
from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.deformation import AnchorParams, AnchorSet, build_anchors, filter_visibility
from mvs_core.edge_prior import AtlasParams, RegionAtlas, build_atlas, dump_atlas
from mvs_core.errors import GeometryError
from mvs_core.geometry import (
    PlaneHypothesis,
    back_project,
    center_in_camera,
    depth_from_source_pixel,
    epipolar_directions,
    orient_to_camera,
    pixel_rays,
    plane_dist,
    project,
    random_unit_vectors,
    transfer_depth,
)
from mvs_core.matching_cost import (
    CostEvaluator,
    CostParams,
    deformable_view_costs,
    highlight_view_costs,
    multi_view_cost,
)
from mvs_core.scene_io import CameraView, DepthNormalResult, PriorBundle
from mvs_core.utils.journal import Journal
from mvs_core.visibility import (
    VisibilityField,
    VisibilityParams,
    clear_views,
    dump_visibility,
    restore_visibility,
    view_selection,
)

logger = root_cfg.setup_logger("mvs_core")

# Smallest image side for which a half-resolution level is added
MIN_COARSE_SIZE = 32
# Ratio between the band widths of successive fine refinement samples
FINE_SHRINK = 0.25


############################################################################################
# Propagation neighbourhoods
#
# Four near V-shaped areas and four far lines, one of each per axis direction. Every offset has
# an odd Manhattan length, so neighbours always belong to the other checkerboard colour.
############################################################################################
def _propagation_areas() -> list[np.ndarray]:
    areas = []
    for ux, uy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        px, py = -uy, ux
        near = [(ux, uy)]
        for k in range(1, 4):
            near.append((ux * (k + 1) + px * k, uy * (k + 1) + py * k))
            near.append((ux * (k + 1) - px * k, uy * (k + 1) - py * k))
        areas.append(np.array(near, dtype=np.intp))
    for ux, uy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        areas.append(np.array([(ux * t, uy * t) for t in range(3, 24, 2)], dtype=np.intp))
    return areas


PROPAGATION_AREAS = _propagation_areas()


############################################################################################
# State
############################################################################################
@dataclass(eq=False)
class SolverState:
    """Per-pixel hypotheses and their current costs for one view."""
    normals: np.ndarray
    depths: np.ndarray
    cost: np.ndarray
    reliable: np.ndarray
    # (H, W, V) per-view costs of the stored hypothesis under its cost class
    view_costs: np.ndarray
    # Reliable highlight pixels excluded from updates
    frozen: np.ndarray
    cost_class: np.ndarray
    iteration: int = 0

    def hypothesis(self, x: int, y: int) -> PlaneHypothesis:
        return PlaneHypothesis(self.normals[y, x].copy(), float(self.depths[y, x]))


@dataclass
class DepthIntervals:
    """Aggregated refinement intervals per pixel, (M, 2) each as (low, high).

    valid is False where no visible view produced an interval; those pixels use fixed intervals.
    """
    left: np.ndarray
    right: np.ndarray
    valid: np.ndarray


@dataclass(eq=False)
class ViewSnapshot:
    """Previous-pass maps of a view, read by the other views' visibility restoration."""
    depth: np.ndarray
    cost: np.ndarray
    reliable: np.ndarray
    highlight: np.ndarray


@dataclass
class PassSummary:
    view: int
    pass_no: int
    mean_cost: float
    reliable_frac: float
    degenerate_frac: float

    def as_row(self) -> dict:
        return {
            "timestamp": api.utc_to_iso_str(),
            "view": self.view,
            "pass": self.pass_no,
            "mean_cost": self.mean_cost,
            "reliable_frac": self.reliable_frac,
            "degenerate_frac": self.degenerate_frac,
        }


############################################################################################
# Stateless operations
############################################################################################
def depth_range(priors: list[PriorBundle], cfg: MvsCfg) -> tuple[float, float]:
    """Search range for depths: the configured one, else [0.5 * p1, 1.5 * p99] of the mono depths."""
    if cfg.depth_max > 0:
        d_min = cfg.depth_min if cfg.depth_min > 0 else cfg.depth_max * 1e-3
        return float(d_min), float(cfg.depth_max)
    values = np.concatenate([p.mono_depth[p.mono_depth > 0].ravel() for p in priors])
    if values.size == 0:
        raise GeometryError("Empty depth range: no monocular depth and no depth_max configured")
    lo, hi = np.percentile(values, [1.0, 99.0])
    return float(0.5 * lo), float(1.5 * hi)


def initialize(view: CameraView,
               priors: PriorBundle,
               num_views: int,
               d_range: tuple[float, float],
               seed_fraction: float,
               rng: np.random.Generator) -> SolverState:
    """Random camera-facing planes with uniform depths; a fraction of pixels start from the priors."""
    h, w = view.height, view.width
    ys, xs = np.mgrid[0:h, 0:w]
    rays = pixel_rays(view.K, np.stack([xs, ys], axis=-1))
    depths = rng.uniform(d_range[0], d_range[1], size=(h, w))
    normals = orient_to_camera(random_unit_vectors(rng, h * w).reshape(h, w, 3), rays)

    seeded = (rng.random((h, w)) < seed_fraction) & (priors.mono_depth > 0)
    depths[seeded] = np.clip(priors.mono_depth[seeded], d_range[0], d_range[1])
    mono_normals = orient_to_camera(priors.mono_normal, rays)
    normals[seeded] = mono_normals[seeded]

    return SolverState(
        normals=normals,
        depths=depths,
        cost=np.full((h, w), api.MAX_COST),
        reliable=np.zeros((h, w), dtype=bool),
        view_costs=np.full((h, w, num_views), api.MAX_COST),
        frozen=np.zeros((h, w), dtype=bool),
        cost_class=np.full((h, w), api.COST_CLASS.PLAIN, dtype=np.int8),
    )


def classify_reliability(cost: np.ndarray, weights: np.ndarray, tau_rel: float) -> np.ndarray:
    """Reliable where the aggregated cost is below tau_rel and some view carries weight."""
    return (cost < tau_rel) & (np.asarray(weights).sum(axis=-1) > 0)


def hemisphere_constraint(points: np.ndarray,
                          normals: np.ndarray,
                          centers: np.ndarray,
                          visible: np.ndarray) -> np.ndarray:
    """True where each normal faces the reference camera and every visible source camera.

    Args:
        points: (M, 3) surface points in the reference camera frame.
        normals: (M, 3) candidate normals in the same frame.
        centers: (V, 3) source camera centers in the same frame.
        visible: (M, V) visibility of each point in each source.
    """
    facing_ref = np.sum(normals * points, axis=-1) <= 0
    if centers.size == 0:
        return facing_ref
    dirs = points[:, None, :] - centers[None, :, :]
    dots = np.einsum("mk,mvk->mv", normals, dirs)
    return facing_ref & np.all((dots <= 0) | ~visible, axis=-1)


def _kth(values: np.ndarray, k: np.ndarray, largest: bool) -> np.ndarray:
    # NaN (unusable view) sorts last in both directions
    ordered = -np.sort(-values, axis=-1) if largest else np.sort(values, axis=-1)
    return np.take_along_axis(ordered, (k - 1)[:, None], axis=-1)[:, 0]


def epipolar_intervals(pixels: np.ndarray,
                       depths: np.ndarray,
                       ref: CameraView,
                       sources: list[CameraView],
                       visible: np.ndarray,
                       alpha: float = 1.0,
                       beta: float = 4.0,
                       mu: int = 3,
                       mode: api.INTERVAL_MODE = api.INTERVAL_MODE.ORDER_STATISTIC) -> DepthIntervals:
    """Depth intervals on either side of the current depth from epipolar pixel offsets.

    In each visible view, the projection of p is moved alpha and alpha + beta pixels both ways
    along its epipolar line and the offsets are mapped back to depths on p's ray. The per-view
    intervals are combined with the mu-th extremes across views (ORDER_STATISTIC) or with the
    min/max envelope of the first mu views (FORMULA). With fewer than mu views the envelope of all
    of them is used.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depths = np.asarray(depths, dtype=np.float64).ravel()
    m, v = len(pixels), len(sources)
    steps = np.array([-(alpha + beta), -alpha, alpha, alpha + beta])
    per_view = np.full((m, v, 4), np.nan)
    usable = np.zeros((m, v), dtype=bool)

    for j, src in enumerate(sources):
        rows = np.flatnonzero(visible[:, j])
        if rows.size == 0:
            continue
        p = pixels[rows]
        d = depths[rows]
        pj, z = project(back_project(p, d, ref), src)
        dirs, ok = epipolar_directions(p, ref, src)
        q = pj[:, None, :] + steps[None, :, None] * dirs[:, None, :]
        dq = depth_from_source_pixel(p, q, ref, src)
        with np.errstate(invalid="ignore"):
            ordered = ((dq[:, 0] > 0) & (dq[:, 0] < dq[:, 1]) & (dq[:, 1] < d)
                       & (d < dq[:, 2]) & (dq[:, 2] < dq[:, 3]))
        good = ok & (z > 0) & np.all(np.isfinite(dq), axis=-1) & ordered
        per_view[rows[good], j] = dq[good]
        usable[rows[good], j] = True

    if mode == api.INTERVAL_MODE.FORMULA:
        usable &= np.cumsum(usable, axis=1) <= mu
        per_view[~usable] = np.nan
        k = np.ones(m, dtype=np.intp)
    else:
        count = usable.sum(axis=1)
        k = np.where(count >= mu, mu, 1).astype(np.intp)

    left = np.stack([_kth(per_view[..., 0], k, largest=False), _kth(per_view[..., 1], k, largest=True)], axis=-1)
    right = np.stack([_kth(per_view[..., 2], k, largest=True), _kth(per_view[..., 3], k, largest=False)], axis=-1)
    valid = usable.any(axis=1) & np.all(np.isfinite(left), axis=1) & np.all(np.isfinite(right), axis=1)
    return DepthIntervals(np.sort(left, axis=-1), np.sort(right, axis=-1), valid)


def fixed_intervals(depths: np.ndarray, frac: float) -> DepthIntervals:
    """Fixed relative perturbation: [d (1 - frac), d] and [d, d (1 + frac)]."""
    d = np.asarray(depths, dtype=np.float64).ravel()
    return DepthIntervals(np.stack([d * (1 - frac), d], axis=-1), np.stack([d, d * (1 + frac)], axis=-1),
                          np.ones(len(d), dtype=bool))


def highlight_rules(state: SolverState, highlight_mask: np.ndarray, use_deformation: bool = True) -> bool:
    """Reference-view highlight rules.

    Reliable highlight pixels are frozen. Unreliable highlight pixels switch to the anchor-only
    cost. A fully masked reference freezes every pixel.

    Returns:
        True when the reference view is entirely masked (degenerate).
    """
    mask = np.asarray(highlight_mask, dtype=bool)
    if not mask.any():
        return False
    if mask.all():
        state.frozen[:] = True
        state.cost_class[:] = api.COST_CLASS.FROZEN
        return True
    state.frozen = mask & state.reliable
    if use_deformation:
        state.cost_class[mask & ~state.reliable] = api.COST_CLASS.HIGHLIGHT
    state.cost_class[state.frozen] = api.COST_CLASS.FROZEN
    return False


def clear_source_highlights(field: VisibilityField, snapshots: dict[int, ViewSnapshot]) -> int:
    """Treat p as invisible in source j when it lands on a reliable highlight pixel of j."""
    if field.projected is None:
        return 0
    clear = np.zeros(field.restored.shape, dtype=bool)
    for j, source_id in enumerate(field.source_ids):
        snap = snapshots.get(source_id)
        if snap is None or not snap.highlight.any():
            continue
        proj = field.projected[..., j, :]
        inside = proj[..., 0] >= 0
        hit = np.zeros(inside.shape, dtype=bool)
        px, py = proj[inside, 0], proj[inside, 1]
        hit[inside] = snap.highlight[py, px] & snap.reliable[py, px]
        clear[..., j] = hit & field.restored[..., j]
    clear_views(field, clear)
    return int(clear.sum())


############################################################################################
# Per-view solver
############################################################################################
class ViewSolver:
    """Solves one reference view against all other views of the scene."""

    def __init__(self,
                 view: CameraView,
                 priors: PriorBundle,
                 sources: list[CameraView],
                 cfg: MvsCfg,
                 d_range: tuple[float, float]) -> None:
        self.view = view
        self.priors = priors
        self.sources = sources
        self.cfg = cfg
        self.d_min, self.d_max = d_range
        use_corrected = cfg.use_highlight_rules and cfg.use_corrected_images
        self.evaluator = CostEvaluator(view, sources, CostParams.from_cfg(cfg), use_corrected)
        self.anchor_params = AnchorParams.from_cfg(cfg)
        self.vis_params = VisibilityParams.from_cfg(cfg)
        self.atlas_params = AtlasParams.from_cfg(cfg)

        h, w = view.height, view.width
        ys, xs = np.mgrid[0:h, 0:w]
        self.pixels = np.stack([xs.ravel(), ys.ravel()], axis=-1).astype(np.intp)
        self.rays = pixel_rays(view.K, self.pixels)
        self.centers = (np.stack([center_in_camera(view, s) for s in sources]) if sources
                        else np.zeros((0, 3)))
        self.colour = (xs.ravel() + ys.ravel()) % 2

        self.state: Optional[SolverState] = None
        self.atlas: Optional[RegionAtlas] = None
        self.visibility: Optional[VisibilityField] = None
        self.weights = np.zeros((h * w, len(sources)))
        s = self.anchor_params.num_sectors
        self.anchor_pixels = np.zeros((h * w, s, 2), dtype=np.intp)
        self.anchor_valid = np.zeros((h * w, s), dtype=bool)
        self.anchor_mask = np.zeros((h * w, len(sources), s), dtype=bool)
        self.degenerate = False

    @property
    def num_views(self) -> int:
        return len(self.sources)

    def _flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        assert self.state is not None
        return self.state.normals.reshape(-1, 3), self.state.depths.reshape(-1), self.state.cost.reshape(-1)

    ########################################################################################
    # Cost evaluation
    ########################################################################################
    def evaluate(self,
                 idx: np.ndarray,
                 normals: np.ndarray,
                 depths: np.ndarray,
                 upper: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
        """Aggregated and per-view costs of hypotheses at flat pixel indices under their cost class.

        With `upper`, deformable hypotheses whose cost provably reaches `upper` skip the anchor
        sub-patches and come back with an infinite aggregated cost.
        """
        assert self.state is not None
        m = len(idx)
        pixels = self.pixels[idx]
        dists = plane_dist(normals, depths, pixels, self.view.K)
        weights = self.weights[idx]
        visible = weights > 0
        cls = self.state.cost_class.reshape(-1)[idx]
        view_costs = np.full((m, self.num_views), api.MAX_COST)

        whole = cls != api.COST_CLASS.HIGHLIGHT
        if whole.any():
            view_costs[whole] = self.evaluator.view_costs(pixels[whole], normals[whole], dists[whole],
                                                          views=visible[whole])
        deformable = cls == api.COST_CLASS.DEFORMABLE
        pruned = np.zeros(m, dtype=bool)
        if upper is not None and deformable.any():
            # Anchor costs are non-negative, so lam times the central cost bounds the deformable cost
            rows = np.flatnonzero(deformable)
            bound = self.cfg.lam * multi_view_cost(view_costs[rows], weights[rows])
            pruned[rows[bound >= upper[rows]]] = True
        anchored = np.flatnonzero((deformable & ~pruned) | (cls == api.COST_CLASS.HIGHLIGHT))
        if anchored.size:
            mask = self.anchor_mask[idx[anchored]] & visible[anchored][:, :, None]
            ac = self.evaluator.anchor_costs(self.anchor_pixels[idx[anchored]], mask, normals[anchored],
                                             dists[anchored])
            deform = cls[anchored] == api.COST_CLASS.DEFORMABLE
            if deform.any():
                rows = anchored[deform]
                view_costs[rows] = deformable_view_costs(view_costs[rows], ac[deform], mask[deform],
                                                         self.cfg.lam)
            if (~deform).any():
                view_costs[anchored[~deform]] = highlight_view_costs(ac[~deform], mask[~deform])
        cost = multi_view_cost(view_costs, weights)
        cost[pruned] = np.inf
        return cost, view_costs

    def admissible(self, idx: np.ndarray, normals: np.ndarray, depths: np.ndarray) -> np.ndarray:
        points = self.rays[idx] * depths[:, None]
        if self.cfg.use_hemisphere:
            return hemisphere_constraint(points, normals, self.centers, self.weights[idx] > 0)
        return np.sum(normals * points, axis=-1) <= 0

    def try_hypotheses(self, idx: np.ndarray, normals: np.ndarray, depths: np.ndarray) -> int:
        """Replace stored hypotheses where the candidates cost strictly less; returns the count."""
        assert self.state is not None
        cur_n, cur_d, cur_c = self._flat()
        with np.errstate(invalid="ignore"):
            keep = np.isfinite(depths) & (depths >= self.d_min) & (depths <= self.d_max)
        # Candidates that repeat the stored plane cannot lower its cost
        keep &= ~(np.isclose(depths, cur_d[idx], rtol=1e-9, atol=0.0) & np.all(normals == cur_n[idx], axis=-1))
        if keep.any():
            sub = np.flatnonzero(keep)
            keep[sub[~self.admissible(idx[sub], normals[sub], depths[sub])]] = False
        if not keep.any():
            return 0
        rows, n, d = idx[keep], normals[keep], depths[keep]
        cost, view_costs = self.evaluate(rows, n, d, upper=cur_c[rows])
        better = cost < cur_c[rows]
        rows = rows[better]
        cur_n[rows] = n[better]
        cur_d[rows] = d[better]
        cur_c[rows] = cost[better]
        self.state.view_costs.reshape(-1, self.num_views)[rows] = view_costs[better]
        return int(better.sum())

    def colour_pixels(self, colour: int) -> np.ndarray:
        assert self.state is not None
        return np.flatnonzero((self.colour == colour) & ~self.state.frozen.reshape(-1))

    ########################################################################################
    # Normal sampling
    ########################################################################################
    def sample_normals(self,
                       idx: np.ndarray,
                       base: np.ndarray,
                       depths: np.ndarray,
                       kind: int,
                       sigma: float,
                       rng: np.random.Generator) -> np.ndarray:
        """kind 0 keeps base, 1 perturbs it, 2 draws fresh normals; 1 and 2 use rejection sampling
        against the admissibility predicate and keep base where every try failed."""
        if kind == 0:
            return base
        out = base.copy()
        pending = np.ones(len(idx), dtype=bool)
        for _ in range(self.cfg.normal_max_tries):
            todo = np.flatnonzero(pending)
            if todo.size == 0:
                break
            if kind == 1:
                cand = base[todo] + sigma * rng.normal(size=(todo.size, 3))
                cand /= np.maximum(np.linalg.norm(cand, axis=1, keepdims=True), 1e-12)
            else:
                cand = orient_to_camera(random_unit_vectors(rng, todo.size), self.rays[idx[todo]])
            ok = self.admissible(idx[todo], cand, depths[todo])
            out[todo[ok]] = cand[ok]
            pending[todo[ok]] = False
        return out

    def sanitize_normals(self) -> int:
        """Replace stored normals that violate the admissibility predicate by the reverse mean
        viewing direction of the cameras that see the point."""
        assert self.state is not None
        normals, depths, _ = self._flat()
        idx = np.flatnonzero(~self.state.frozen.reshape(-1))
        bad = idx[~self.admissible(idx, normals[idx], depths[idx])]
        if bad.size == 0:
            return 0
        points = self.rays[bad] * depths[bad, None]
        total = points / np.linalg.norm(points, axis=1, keepdims=True)
        if self.cfg.use_hemisphere and self.num_views:
            dirs = points[:, None, :] - self.centers[None, :, :]
            dirs /= np.maximum(np.linalg.norm(dirs, axis=-1, keepdims=True), 1e-12)
            total = total + np.sum(dirs * (self.weights[bad] > 0)[..., None], axis=1)
        normals[bad] = -total / np.maximum(np.linalg.norm(total, axis=1, keepdims=True), 1e-12)
        return int(bad.size)

    ########################################################################################
    # Pass
    ########################################################################################
    def begin_pass(self, pass_index: int, snapshots: dict[int, ViewSnapshot]) -> None:
        """Visibility, reliability, atlas, anchors and cost classes for this pass."""
        assert self.state is not None
        st = self.state
        h, w = self.view.height, self.view.width
        normals, depths, _ = self._flat()

        dists = plane_dist(normals, depths, self.pixels, self.view.K)
        plain = self.evaluator.view_costs(self.pixels, normals, dists)
        weights = view_selection(plain, self.cfg.vs_sigma, self.cfg.vs_tau_good, self.cfg.vs_tau_bad)
        field = restore_visibility(weights.reshape(h, w, self.num_views), self.view, st.depths, self.sources,
                                   {k: (s.depth, s.cost) for k, s in snapshots.items()}, self.vis_params,
                                   pass_index)
        if self.cfg.use_highlight_rules:
            cleared = clear_source_highlights(field, snapshots)
            if cleared:
                logger.debug(f"view={self.view.id} cleared {cleared} highlight visibilities")
        self.visibility = field
        self.weights = field.effective.reshape(h * w, self.num_views)

        cost = multi_view_cost(plain, self.weights)
        st.reliable = classify_reliability(cost, self.weights, self.cfg.tau_rel).reshape(h, w)
        st.cost = cost.reshape(h, w)
        st.view_costs = plain.reshape(h, w, self.num_views)
        st.cost_class = np.full((h, w), api.COST_CLASS.PLAIN, dtype=np.int8)
        st.frozen = np.zeros((h, w), dtype=bool)

        self.anchor_valid[:] = False
        self.anchor_mask[:] = False
        if self.cfg.use_deformation:
            if self.cfg.use_prior_atlas and self.atlas is None:
                self.atlas = build_atlas(self.view, self.priors, self.atlas_params)
            unreliable = np.flatnonzero(~st.reliable.reshape(-1))
            labels = self.atlas.labels if (self.cfg.use_prior_atlas and self.atlas is not None) else None
            anchors = build_anchors(self.pixels[unreliable], st.reliable, st.cost, labels, self.anchor_params)
            self._store_anchors(unreliable, anchors, field)
            has_anchor = self.anchor_mask.any(axis=(1, 2)).reshape(h, w)
            st.cost_class[~st.reliable & has_anchor] = api.COST_CLASS.DEFORMABLE

        if self.cfg.use_highlight_rules:
            self.degenerate = highlight_rules(st, self.priors.highlight_mask, self.cfg.use_deformation)
            if self.degenerate:
                logger.warning(f"view={self.view.id} is entirely highlight-masked; all pixels frozen")

        if self.cfg.use_hemisphere:
            fixed = self.sanitize_normals()
            if fixed:
                logger.debug(f"view={self.view.id} reset {fixed} normals outside the visible hemispheres")

        idx = np.flatnonzero(~st.frozen.reshape(-1))
        if idx.size:
            normals, depths, flat_cost = self._flat()
            c, vc = self.evaluate(idx, normals[idx], depths[idx])
            flat_cost[idx] = c
            st.view_costs.reshape(h * w, self.num_views)[idx] = vc

    def _store_anchors(self, rows: np.ndarray, anchors: AnchorSet, field: VisibilityField) -> None:
        self.anchor_pixels[rows] = anchors.pixels
        self.anchor_valid[rows] = anchors.valid
        if self.cfg.use_visibility_filter:
            self.anchor_mask[rows] = filter_visibility(anchors, field.effective)
        else:
            self.anchor_mask[rows] = anchors.valid[:, None, :]

    def run_pass(self, pass_index: int, snapshots: dict[int, ViewSnapshot], rng: np.random.Generator) -> PassSummary:
        assert self.state is not None
        self.begin_pass(pass_index, snapshots)
        if not self.degenerate:
            for _ in range(self.cfg.sweeps_per_pass):
                for colour in (0, 1):
                    propagate(self, colour)
                    refine(self, colour, rng, pass_index)
        st = self.state
        st.reliable = classify_reliability(st.cost.reshape(-1), self.weights,
                                           self.cfg.tau_rel).reshape(st.cost.shape)
        st.iteration += 1
        return PassSummary(self.view.id, pass_index + 1, float(st.cost.mean()), float(st.reliable.mean()),
                           float(np.mean(st.cost >= api.MAX_COST)))

    def snapshot(self) -> ViewSnapshot:
        assert self.state is not None
        return ViewSnapshot(self.state.depths.copy(), self.state.cost.copy(), self.state.reliable.copy(),
                            self.priors.highlight_mask)

    def result(self) -> DepthNormalResult:
        assert self.state is not None
        st = self.state
        return DepthNormalResult(st.depths.astype(np.float32), st.normals.astype(np.float32),
                                 st.cost.astype(np.float32), st.reliable & ~st.frozen, self.view.id,
                                 self.degenerate)

    def dump_debug(self, out_dir: Path) -> None:
        if self.atlas is not None:
            dump_atlas(self.atlas, out_dir, self.view.id)
        if self.visibility is not None:
            dump_visibility(self.visibility, out_dir, self.view.id)


############################################################################################
# Sweeps
############################################################################################
def propagate(solver: ViewSolver, colour: int) -> int:
    """Checkerboard propagation for one colour.

    Candidates per pixel: the lowest-cost neighbour of each propagation area, plus the hypotheses at
    the pixel's anchors that survived the visibility filter in at least one source view. Each is
    transferred to the pixel's ray and kept if it lowers the cost.
    """
    idx = solver.colour_pixels(colour)
    if idx.size == 0:
        return 0
    normals, depths, cost = solver._flat()
    snap_n, snap_d, snap_c = normals.copy(), depths.copy(), cost.copy()
    h, w = solver.view.height, solver.view.width
    px = solver.pixels[idx]
    rows = np.arange(idx.size)

    proposals = []
    for offsets in PROPAGATION_AREAS:
        q = px[:, None, :] + offsets[None, :, :]
        inb = (q[..., 0] >= 0) & (q[..., 0] < w) & (q[..., 1] >= 0) & (q[..., 1] < h)
        qflat = np.clip(q[..., 1], 0, h - 1) * w + np.clip(q[..., 0], 0, w - 1)
        qc = np.where(inb, snap_c[qflat], np.inf)
        best = np.argmin(qc, axis=1)
        proposals.append((qflat[rows, best], np.isfinite(qc[rows, best])))
    if solver.cfg.use_deformation and solver.cfg.use_anchor_propagation:
        retained = solver.anchor_mask[idx].any(axis=1)
        for s in range(solver.anchor_params.num_sectors):
            anchor = solver.anchor_pixels[idx, s]
            proposals.append((anchor[:, 1] * w + anchor[:, 0], retained[:, s]))

    accepted = 0
    for src, ok in proposals:
        if not ok.any():
            continue
        target = idx[ok]
        src = src[ok]
        n = snap_n[src]
        X = solver.rays[src] * snap_d[src, None]
        d = transfer_depth(n, X, solver.pixels[target], solver.view.K)
        accepted += solver.try_hypotheses(target, n, d)
    return accepted


def refine(solver: ViewSolver, colour: int, rng: np.random.Generator, pass_index: int) -> int:
    """Local perturbation of the stored hypotheses of one colour.

    Sample k draws its depth from the left interval when k is even and the right one otherwise. Its
    normal is the current one (k = 0, 1), a perturbation of it (k = 2, 3) or a fresh admissible
    draw (k = 4, 5).

    The intervals start alpha pixels away from the current depth. Fine sample j then draws from the
    band they leave out, around the depth reached so far, scaled by FINE_SHRINK ** j; odd j also
    perturb the normal by the same factor.
    """
    idx = solver.colour_pixels(colour)
    if idx.size == 0:
        return 0
    cfg = solver.cfg
    normals, depths, _ = solver._flat()
    d = depths[idx].copy()
    fallback = fixed_intervals(d, cfg.fixed_interval_frac)
    # Half-widths below and above d of the band the intervals do not cover
    band = np.stack([d * cfg.fixed_interval_frac, d * cfg.fixed_interval_frac], axis=-1)
    if cfg.use_depth_intervals:
        iv = epipolar_intervals(solver.pixels[idx], d, solver.view, solver.sources, solver.weights[idx] > 0,
                                cfg.alpha, cfg.beta, cfg.mu, cfg.interval_mode)
        band[iv.valid, 0] = d[iv.valid] - iv.left[iv.valid, 1]
        band[iv.valid, 1] = iv.right[iv.valid, 0] - d[iv.valid]
        iv.left[~iv.valid] = fallback.left[~iv.valid]
        iv.right[~iv.valid] = fallback.right[~iv.valid]
    else:
        iv = fallback
    sigma = cfg.normal_perturbation / (pass_index + 1)

    accepted = 0
    for k in range(cfg.refine_samples):
        side = iv.left if k % 2 == 0 else iv.right
        dk = side[:, 0] + (side[:, 1] - side[:, 0]) * rng.random(idx.size)
        nk = solver.sample_normals(idx, normals[idx].copy(), dk, (k // 2) % 3, sigma, rng)
        accepted += solver.try_hypotheses(idx, nk, dk)

    for j in range(cfg.fine_samples):
        scale = FINE_SHRINK ** j
        u = rng.uniform(-1.0, 1.0, idx.size)
        dj = depths[idx] + scale * u * np.where(u < 0, band[:, 0], band[:, 1])
        nj = solver.sample_normals(idx, normals[idx].copy(), dj, j % 2, sigma * scale, rng)
        accepted += solver.try_hypotheses(idx, nj, dj)
    return accepted


############################################################################################
# Scene drivers
############################################################################################
def _levels(scene: list[tuple[CameraView, PriorBundle]], cfg: MvsCfg) -> list[bool]:
    """[True, False] for a half-resolution level followed by full resolution, else [False]."""
    small = min(min(v.width, v.height) for v, _ in scene)
    return [True, False] if cfg.multi_scale and small // 2 >= MIN_COARSE_SIZE else [False]


def _upsample(state: SolverState, view: CameraView) -> tuple[np.ndarray, np.ndarray]:
    size = (view.width, view.height)
    depths = cv2.resize(state.depths, size, interpolation=cv2.INTER_NEAREST)
    normals = cv2.resize(state.normals, size, interpolation=cv2.INTER_NEAREST)
    normals /= np.maximum(np.linalg.norm(normals, axis=-1, keepdims=True), 1e-12)
    ys, xs = np.mgrid[0 : view.height, 0 : view.width]
    return depths, orient_to_camera(normals, pixel_rays(view.K, np.stack([xs, ys], axis=-1)))


def run_scene(scene: list[tuple[CameraView, PriorBundle]],
              cfg: MvsCfg,
              out_dir: Optional[Path] = None,
              view_ids: Optional[list[int]] = None,
              dump_debug: bool = False) -> dict[int, DepthNormalResult]:
    """Solve the depth/normal maps of `view_ids` (default all views).

    Views are solved pass by pass in lock-step; within a pass they run on a pool of
    `threads` workers. With `out_dir` the progress journal is written there.
    """
    targets = sorted(view_ids) if view_ids is not None else sorted(v.id for v, _ in scene)
    known = {v.id for v, _ in scene}
    missing = [t for t in targets if t not in known]
    if missing:
        raise ValueError(f"Unknown view id(s) {missing}; scene has {sorted(known)}")

    threads = root_cfg.resolve_threads(cfg)
    d_range = depth_range([p for _, p in scene], cfg)
    journal = None
    if out_dir is not None:
        journal = Journal(Path(out_dir) / file_naming.PROGRESS_FILE, reqd_columns=api.PROGRESS_FIELDS)
        journal.delete()
    logger.info(f"Solving views {targets} with {threads} thread(s), depth range "
                f"[{d_range[0]:.4g}, {d_range[1]:.4g}]")

    previous: dict[int, SolverState] = {}
    solvers: dict[int, ViewSolver] = {}
    for level_no, coarse in enumerate(_levels(scene, cfg)):
        level_scene = [(v.scaled(v.width // 2, v.height // 2), p.scaled(v.width // 2, v.height // 2))
                       if coarse else (v, p) for v, p in scene]
        by_id = {v.id: (v, p) for v, p in level_scene}
        solvers = {}
        for vid in targets:
            view, priors = by_id[vid]
            sources = [v for v, _ in level_scene if v.id != vid]
            solver = ViewSolver(view, priors, sources, cfg, d_range)
            rng = np.random.default_rng([cfg.seed, vid, level_no])
            solver.state = initialize(view, priors, len(sources), d_range, cfg.mono_seed_fraction, rng)
            if vid in previous:
                solver.state.depths, solver.state.normals = _upsample(previous[vid], view)
            solvers[vid] = solver
        if coarse:
            logger.debug("Coarse level at half resolution")

        for k in range(cfg.outer_passes):
            snapshots = {vid: s.snapshot() for vid, s in solvers.items()} if k > 0 else {}

            def _run(vid: int, k: int = k, level_no: int = level_no, snapshots: dict = snapshots) -> PassSummary:
                rng = np.random.default_rng([cfg.seed, vid, level_no, k + 1])
                return solvers[vid].run_pass(k, snapshots, rng)

            with ThreadPoolExecutor(max_workers=threads) as pool:
                summaries = list(pool.map(_run, targets))
            for summary in summaries:
                logger.info(f"view={summary.view} pass={summary.pass_no} mean_cost={summary.mean_cost:.4f} "
                            f"reliable_frac={summary.reliable_frac:.4f}")
                if journal is not None and not coarse:
                    journal.add_row(summary.as_row())
        previous = {vid: s.state for vid, s in solvers.items() if s.state is not None}

    if journal is not None:
        journal.save()
    if dump_debug and out_dir is not None:
        for s in solvers.values():
            s.dump_debug(Path(out_dir))
    return {vid: s.result() for vid, s in solvers.items()}


def run_view(scene: list[tuple[CameraView, PriorBundle]],
             view_id: int,
             cfg: MvsCfg,
             out_dir: Optional[Path] = None) -> DepthNormalResult:
    """Solve a single view. Other views contribute images only, so visibility restoration falls
    back to the selection weights."""
    return run_scene(scene, cfg, out_dir, [view_id])[view_id]
