####################################################################################################
# Per-view visibility of reference pixels in each source view.
#
# Selection weights come from thresholding the per-view matching costs. From the second pass on,
# they are checked (and restored) by reprojection: p is projected into source j with its current
# depth, the lowest-cost pixel of a window around the projection lends its depth, and the point is
# reprojected back into the reference view. p counts as visible in j when the round trip lands
# within eps_reproj pixels.
####################################################################################################
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from mvs_core import configuration as root_cfg
from mvs_core import file_naming
from mvs_core.config_objects import MvsCfg
from mvs_core.geometry import back_project, project
from mvs_core.scene_io import CameraView, write_mask

logger = root_cfg.setup_logger("mvs_core")

# Distance penalty that breaks cost ties toward the window center
WINDOW_TIE_BREAK = 1e-9


@dataclass(frozen=True)
class VisibilityParams:
    vs_sigma: float = 0.3
    vs_tau_good: float = 0.8
    vs_tau_bad: float = 1.2
    eps_reproj: float = 2.0
    reproj_window: int = 11
    visibility_floor_weight: float = 0.1
    use_visibility_restoration: bool = True

    @classmethod
    def from_cfg(cls, cfg: MvsCfg) -> "VisibilityParams":
        return cls(**{name: getattr(cfg, name) for name in cls.__dataclass_fields__})


@dataclass
class VisibilityField:
    """Visibility of every reference pixel in each source view; arrays are (H, W, V)."""
    weights: np.ndarray
    restored: np.ndarray
    errors: np.ndarray
    # Effective weights w' = w * restored, floored where restoration revived a zero weight
    effective: np.ndarray
    source_ids: list[int]
    # Rounded projection of each pixel into each source, (H, W, V, 2); -1 outside the image
    projected: Optional[np.ndarray] = None

    @property
    def num_views(self) -> int:
        return self.weights.shape[-1]

    def visible(self) -> np.ndarray:
        return self.effective > 0


############################################################################################
# View selection
############################################################################################
def view_selection(costs: np.ndarray,
                   sigma: float = 0.3,
                   tau_good: float = 0.8,
                   tau_bad: float = 1.2) -> np.ndarray:
    """Selection weights in [0, 1] from per-view costs.

    Gaussian below tau_good, then a linear decay from the tau_good value down to 0 at tau_bad.
    """
    m = np.asarray(costs, dtype=np.float64)
    gauss = np.exp(-(m * m) / (2.0 * sigma * sigma))
    at_good = np.exp(-(tau_good * tau_good) / (2.0 * sigma * sigma))
    decay = at_good * (tau_bad - m) / (tau_bad - tau_good)
    w = np.where(m < tau_good, gauss, np.where(m < tau_bad, decay, 0.0))
    return np.where(np.isfinite(m), np.clip(w, 0.0, 1.0), 0.0)


############################################################################################
# Reprojection
############################################################################################
def _grid(view: CameraView) -> np.ndarray:
    ys, xs = np.mgrid[0 : view.height, 0 : view.width]
    return np.stack([xs, ys], axis=-1).astype(np.float64)


def project_into(ref: CameraView, ref_depth: np.ndarray, src: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Float projections (H, W, 2) of reference pixels into src and an in-front-and-inside mask."""
    pixels = _grid(ref)
    world = back_project(pixels, ref_depth, ref)
    proj, z = project(world, src)
    inside = ((ref_depth > 0) & (z > 0) & (proj[..., 0] > -0.5) & (proj[..., 0] < src.width - 0.5)
              & (proj[..., 1] > -0.5) & (proj[..., 1] < src.height - 0.5))
    return proj, inside


def reprojection_error(ref: CameraView,
                       ref_depth: np.ndarray,
                       src: CameraView,
                       src_depth: np.ndarray,
                       src_cost: np.ndarray,
                       window: int = 11) -> tuple[np.ndarray, np.ndarray]:
    """Round-trip reprojection error (H, W) in pixels, inf where p does not land inside src.

    Returns:
        (errors, rounded projections (H, W, 2) with -1 outside).
    """
    proj, inside = project_into(ref, ref_depth, src)
    center = np.rint(proj).astype(np.intp)
    half = window // 2
    best_key = np.full(ref_depth.shape, np.inf)
    best = center.copy()
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            qx, qy = center[..., 0] + dx, center[..., 1] + dy
            inb = inside & (qx >= 0) & (qx < src.width) & (qy >= 0) & (qy < src.height)
            key = np.full(ref_depth.shape, np.inf)
            key[inb] = src_cost[qy[inb], qx[inb]] + WINDOW_TIE_BREAK * (dx * dx + dy * dy)
            better = key < best_key
            best_key[better] = key[better]
            best[better, 0] = qx[better]
            best[better, 1] = qy[better]

    ok = inside & np.isfinite(best_key)
    d_src = np.zeros(ref_depth.shape)
    d_src[ok] = src_depth[best[ok, 1], best[ok, 0]]
    ok &= d_src > 0
    errors = np.full(ref_depth.shape, np.inf)
    if ok.any():
        world = back_project(proj[ok], d_src[ok], src)
        back, z = project(world, ref)
        err = np.linalg.norm(back - _grid(ref)[ok], axis=-1)
        errors[ok] = np.where(z > 0, err, np.inf)
    center[~inside] = -1
    return errors, center


def restore_visibility(weights: np.ndarray,
                       ref: CameraView,
                       ref_depth: np.ndarray,
                       sources: list[CameraView],
                       snapshots: dict[int, tuple[np.ndarray, np.ndarray]],
                       params: VisibilityParams,
                       pass_index: int) -> VisibilityField:
    """Visibility field for one pass.

    Args:
        weights: (H, W, V) selection weights.
        snapshots: Previous-pass (depth, cost) per source id. Sources without one, and every source
            in the first pass, fall back to the selection weights.
        pass_index: 0-based pass number.
    """
    h, w, v = weights.shape
    restored = weights > 0
    errors = np.zeros((h, w, v))
    projected = np.full((h, w, v, 2), -1, dtype=np.intp)
    effective = weights.copy()

    for j, src in enumerate(sources):
        snap = snapshots.get(src.id)
        if snap is None or pass_index == 0 or not params.use_visibility_restoration:
            proj, inside = project_into(ref, ref_depth, src)
            rounded = np.rint(proj).astype(np.intp)
            rounded[~inside] = -1
            projected[..., j, :] = rounded
            continue
        err, rounded = reprojection_error(ref, ref_depth, src, snap[0], snap[1], params.reproj_window)
        errors[..., j] = err
        projected[..., j, :] = rounded
        restored[..., j] = err <= params.eps_reproj
        revived = restored[..., j] & (weights[..., j] == 0)
        effective[..., j] = np.where(restored[..., j], weights[..., j], 0.0)
        effective[..., j][revived] = params.visibility_floor_weight

    return VisibilityField(weights, restored, errors, effective, [s.id for s in sources], projected)


def clear_views(field: VisibilityField, mask: np.ndarray) -> None:
    """Mark (H, W, V) entries invisible."""
    field.restored &= ~mask
    field.effective[mask] = 0.0


def dump_visibility(field: VisibilityField, out_dir: Path | str, view_id: int) -> list[Path]:
    """Write one restored-visibility PNG per source view."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for j, source_id in enumerate(field.source_ids):
        path = file_naming.visibility_mask_file(out_dir, view_id, source_id)
        write_mask(path, field.restored[..., j])
        written.append(path)
    return written


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 1.0
