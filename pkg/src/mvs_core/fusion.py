####################################################################################################
# Depth map fusion.
#
# Reference views are visited in id order and only reliable pixels take part. A pixel survives
# when enough other views hold a consistent estimate at its projection that no earlier point has
# consumed (round-trip reprojection, relative depth and normal angle all within bounds). The
# surviving point is the mean of the agreeing estimates, and every pixel that contributed is
# consumed so no surface point is emitted twice.
####################################################################################################
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.geometry import back_project, pixel_rays, project, transfer_depth
from mvs_core.scene_io import CameraView, DepthNormalResult, save_point_cloud

logger = root_cfg.setup_logger("mvs_core")


@dataclass(frozen=True)
class FusionParams:
    fusion_min_consistent: int = 2
    fusion_reproj_px: float = 2.0
    fusion_rel_depth: float = 0.01
    fusion_normal_deg: float = 10.0

    @classmethod
    def from_cfg(cls, cfg: MvsCfg) -> "FusionParams":
        return cls(**{name: getattr(cfg, name) for name in cls.__dataclass_fields__})


@dataclass(eq=False)
class FusedCloud:
    positions: np.ndarray
    normals: np.ndarray
    colors: np.ndarray
    # Number of views behind each point, the reference included
    support: np.ndarray

    @classmethod
    def empty(cls) -> "FusedCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8),
                   np.zeros(0, dtype=np.int32))

    def __len__(self) -> int:
        return len(self.positions)

    def save(self, path: Path | str, text: bool = False) -> Path:
        return save_point_cloud(path, self.positions, self.normals, self.colors, text=text)


def _world_normals(result: DepthNormalResult, view: CameraView) -> np.ndarray:
    return result.normal.astype(np.float64) @ view.R


def fuse(results: dict[int, DepthNormalResult],
         views: list[CameraView],
         params: FusionParams = FusionParams()) -> FusedCloud:
    """Fuse per-view depth/normal maps into one consistent point cloud."""
    by_id = {v.id: v for v in views}
    ids = sorted(vid for vid in results if vid in by_id)
    consumed = {vid: np.zeros(results[vid].depth.shape, dtype=bool) for vid in ids}
    world_normals = {vid: _world_normals(results[vid], by_id[vid]) for vid in ids}
    cos_limit = np.cos(np.deg2rad(params.fusion_normal_deg))

    positions, normals, colors, support = [], [], [], []
    for ref_id in ids:
        ref, res = by_id[ref_id], results[ref_id]
        ys, xs = np.nonzero((res.depth > 0) & np.isfinite(res.depth) & res.reliable & ~consumed[ref_id])
        if xs.size == 0:
            continue
        pixels = np.stack([xs, ys], axis=-1).astype(np.float64)
        X = back_project(pixels, res.depth[ys, xs].astype(np.float64), ref)
        n_ref = world_normals[ref_id][ys, xs]

        sum_X = X.copy()
        sum_n = n_ref.copy()
        sum_c = ref.image[ys, xs].astype(np.float64)
        count = np.zeros(xs.size, dtype=np.int32)
        claims: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]] = []

        for src_id in ids:
            if src_id == ref_id:
                continue
            src, src_res = by_id[src_id], results[src_id]
            proj, z = project(X, src)
            q = np.rint(proj).astype(np.intp)
            inside = (z > 0) & (q[:, 0] >= 0) & (q[:, 0] < src.width) & (q[:, 1] >= 0) & (q[:, 1] < src.height)
            rows = np.flatnonzero(inside)
            qx, qy = q[rows, 0], q[rows, 1]
            d_src = src_res.depth[qy, qx].astype(np.float64)
            ok = (d_src > 0) & np.isfinite(d_src) & src_res.reliable[qy, qx] & ~consumed[src_id][qy, qx]
            rows, qx, qy, d_src = rows[ok], qx[ok], qy[ok], d_src[ok]
            if rows.size == 0:
                continue

            # The source estimate is read on its local plane at the exact projection, falling back to
            # the pixel depth where that plane does not face the ray
            q_pix = np.stack([qx, qy], axis=-1).astype(np.float64)
            n_q = src_res.normal[qy, qx].astype(np.float64)
            d_plane = transfer_depth(n_q, pixel_rays(src.K, q_pix) * d_src[:, None], proj[rows], src.K)
            d_at = np.where(d_plane > 0, d_plane, d_src)
            X_src = back_project(proj[rows], d_at, src)
            back, _ = project(X_src, ref)
            reproj = np.linalg.norm(back - pixels[rows], axis=-1)
            rel_depth = np.abs(d_at - z[rows]) / z[rows]
            n_src = world_normals[src_id][qy, qx]
            cos = np.sum(n_src * n_ref[rows], axis=-1)
            agree = ((reproj < params.fusion_reproj_px) & (rel_depth < params.fusion_rel_depth)
                     & (cos > cos_limit))
            rows, qx, qy = rows[agree], qx[agree], qy[agree]
            sum_X[rows] += X_src[agree]
            sum_n[rows] += n_src[agree]
            sum_c[rows] += src.image[qy, qx]
            count[rows] += 1
            claims.append((src_id, rows, qx, qy))

        keep = count >= params.fusion_min_consistent
        if not keep.any():
            continue
        for src_id, rows, qx, qy in claims:
            sel = keep[rows]
            consumed[src_id][qy[sel], qx[sel]] = True
        consumed[ref_id][ys[keep], xs[keep]] = True

        total = (count[keep] + 1).astype(np.float64)
        positions.append(sum_X[keep] / total[:, None])
        n = sum_n[keep]
        normals.append(n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12))
        gray = np.clip(np.rint(sum_c[keep] / total * 255.0), 0, 255).astype(np.uint8)
        colors.append(np.repeat(gray[:, None], 3, axis=1))
        support.append(count[keep] + 1)
        logger.debug(f"Fusion view={ref_id}: {int(keep.sum())} points from {xs.size} candidate pixels")

    if not positions:
        logger.warning("Fusion produced no points")
        return FusedCloud.empty()
    cloud = FusedCloud(np.concatenate(positions), np.concatenate(normals), np.concatenate(colors),
                       np.concatenate(support).astype(np.int32))
    logger.info(f"Fused {len(cloud)} points from {len(ids)} views")
    return cloud


def fuse_to_file(results: dict[int, DepthNormalResult],
                 views: list[CameraView],
                 path: Path | str,
                 params: Optional[FusionParams] = None) -> FusedCloud:
    cloud = fuse(results, views, params or FusionParams())
    cloud.save(path)
    return cloud
