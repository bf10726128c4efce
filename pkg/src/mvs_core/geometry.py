####################################################################################################
# Projective primitives.
#
# Conventions
#   X_cam = R @ X_world + T, camera center C = -R.T @ T.
#   Depth is z-depth: the camera point of pixel p at depth d is d * K^-1 [x, y, 1].
#   Planes are written in camera coordinates as n.X + dist = 0; a plane through the camera point
#   X_p therefore has dist = -n.X_p. Camera-facing normals satisfy n.ray <= 0.
#
# Functions accept single values or arrays with the coordinate on the last axis.
####################################################################################################
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from mvs_core.errors import GeometryError

if TYPE_CHECKING:
    from mvs_core.scene_io import CameraView

# Degeneracy floor on |det(H / ||H||_F)|
DEGENERATE_DET = 1e-12


@dataclass
class PlaneHypothesis:
    """Per-pixel search variable: camera-space unit normal plus depth along the pixel's ray."""
    n: np.ndarray
    d: float

    def is_valid(self, ray: np.ndarray, d_min: float = 0.0, d_max: float = np.inf) -> bool:
        norm_ok = abs(np.linalg.norm(self.n) - 1.0) <= 1e-6
        return bool(norm_ok and d_min <= self.d <= d_max and float(np.dot(self.n, ray)) <= 0.0)


############################################################
# Rays and camera frames
############################################################
def homogeneous(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    return np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)


def pixel_rays(K: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Camera-space rays K^-1 [x, y, 1] (z component is 1)."""
    return homogeneous(pixels) @ np.linalg.inv(K).T


def camera_center(view: "CameraView") -> np.ndarray:
    return -view.R.T @ view.T


def center_in_camera(view_i: "CameraView", view_j: "CameraView") -> np.ndarray:
    """Center of view j expressed in the camera frame of view i."""
    return view_i.R @ camera_center(view_j) + view_i.T


def relative_pose(view_i: "CameraView", view_j: "CameraView") -> tuple[np.ndarray, np.ndarray]:
    """(R_rel, t_rel) mapping camera-i coordinates to camera-j coordinates."""
    R_rel = view_j.R @ view_i.R.T
    t_rel = view_j.T - R_rel @ view_i.T
    return R_rel, t_rel


def orient_to_camera(normals: np.ndarray, rays: np.ndarray) -> np.ndarray:
    """Flip normals so that n.ray <= 0."""
    facing = np.sum(normals * rays, axis=-1, keepdims=True)
    return np.where(facing > 0, -normals, normals)


def random_unit_vectors(rng: np.random.Generator, count: int) -> np.ndarray:
    v = rng.normal(size=(count, 3))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return v / norm


############################################################
# Projection
############################################################
def back_project(p: np.ndarray, d: np.ndarray | float, view: "CameraView") -> np.ndarray:
    """World point of pixel p at z-depth d."""
    X_cam = pixel_rays(view.K, p) * np.asarray(d, dtype=np.float64)[..., None]
    return (X_cam - view.T) @ view.R


def project(P: np.ndarray, view: "CameraView") -> tuple[np.ndarray, np.ndarray]:
    """Pixel and z-depth of world point(s) P. Points behind the camera report depth <= 0."""
    X_cam = np.asarray(P, dtype=np.float64) @ view.R.T + view.T
    return project_camera_points(X_cam, view.K)


def project_camera_points(X_cam: np.ndarray, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = X_cam[..., 2]
    uvw = X_cam @ K.T
    safe_z = np.where(np.abs(z) > 1e-300, z, 1e-300)
    pixels = uvw[..., :2] / safe_z[..., None]
    return pixels, z


############################################################
# Plane-induced homographies
############################################################
def plane_dist(normals: np.ndarray, depths: np.ndarray, pixels: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Plane offset dist = -n.X_p for the plane through pixel p at depth d."""
    X_p = pixel_rays(K, pixels) * np.asarray(depths, dtype=np.float64)[..., None]
    return -np.sum(normals * X_p, axis=-1)


def plane_homographies(normals: np.ndarray,
                       dists: np.ndarray,
                       view_i: "CameraView",
                       view_j: "CameraView") -> np.ndarray:
    """Homographies from view i to view j induced by planes n.X + dist = 0 (camera-i frame).

    Returned scaled by dist, i.e. K_j (dist R_rel - t_rel n^T) K_i^-1. The scale is positive for
    planes in front of the camera so the sign of the homogeneous coordinate is preserved.
    """
    R_rel, t_rel = relative_pose(view_i, view_j)
    normals = np.asarray(normals, dtype=np.float64)
    dists = np.asarray(dists, dtype=np.float64)
    inner = dists[..., None, None] * R_rel - t_rel[:, None] * normals[..., None, :]
    return view_j.K @ inner @ np.linalg.inv(view_i.K)


def is_degenerate(H: np.ndarray) -> np.ndarray:
    """True where |det(H / ||H||_F)| falls below DEGENERATE_DET or H is not finite."""
    fro = np.linalg.norm(H, axis=(-2, -1))
    finite = np.all(np.isfinite(H), axis=(-2, -1)) & (fro > 0)
    safe = np.where(fro > 0, fro, 1.0)
    det = np.linalg.det(H / safe[..., None, None])
    return ~finite | (np.abs(det) < DEGENERATE_DET)


def homography(h: PlaneHypothesis,
               p: np.ndarray,
               view_i: "CameraView",
               view_j: "CameraView") -> tuple[np.ndarray, bool]:
    """Homography induced by hypothesis h at pixel p, normalised so H[2, 2] = 1 where possible.

    Returns:
        (H, degenerate). A degenerate homography must be treated as maximal cost.
    """
    dist = plane_dist(np.asarray(h.n, dtype=np.float64), np.float64(h.d), np.asarray(p, dtype=np.float64),
                      view_i.K)
    H = plane_homographies(h.n, dist, view_i, view_j)
    degenerate = bool(is_degenerate(H)) or dist <= 0
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    else:
        H = H / np.linalg.norm(H)
    return H, degenerate


def apply_homographies(H: np.ndarray, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map pixels through homographies.

    Args:
        H: (..., 3, 3)
        pixels: (..., M, 2)

    Returns:
        (mapped pixels (..., M, 2), homogeneous w (..., M))
    """
    mapped = homogeneous(pixels) @ np.swapaxes(H, -1, -2)
    w = mapped[..., 2]
    safe_w = np.where(np.abs(w) > 1e-300, w, 1e-300)
    return mapped[..., :2] / safe_w[..., None], w


def transfer_depth(normals: np.ndarray, X_plane: np.ndarray, pixels: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Depth along the rays of `pixels` of the planes (normals, through camera points X_plane).

    Non-positive or non-finite results mean the plane is not in front of the pixel.
    """
    rays = pixel_rays(K, pixels)
    num = np.sum(normals * X_plane, axis=-1)
    den = np.sum(normals * rays, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / den
    return np.where(np.isfinite(d), d, -1.0)


############################################################
# Epipolar geometry
############################################################
def _ray_images(p: np.ndarray, view_i: "CameraView", view_j: "CameraView") -> tuple[np.ndarray, np.ndarray]:
    """(u, v) such that the image in view j of p at depth d is dehomogenised(u * d + v)."""
    R_rel, t_rel = relative_pose(view_i, view_j)
    u = pixel_rays(view_i.K, p) @ (view_j.K @ R_rel).T
    v = view_j.K @ t_rel
    return u, v


def epipolar_directions(pixels: np.ndarray,
                        view_i: "CameraView",
                        view_j: "CameraView") -> tuple[np.ndarray, np.ndarray]:
    """Unit epipolar-line directions in view j, oriented toward increasing depth.

    Returns:
        (directions (..., 2), valid (...)). Invalid where p's ray passes through the center of j.
    """
    u, v = _ray_images(pixels, view_i, view_j)
    num = u[..., :2] * v[2] - u[..., 2:3] * v[:2]
    norm = np.linalg.norm(num, axis=-1)
    scale = np.linalg.norm(u, axis=-1) * np.linalg.norm(v) + 1e-300
    valid = norm > 1e-12 * scale
    safe = np.where(valid, norm, 1.0)
    return num / safe[..., None], valid


def epipolar_line(p: np.ndarray, view_i: "CameraView", view_j: "CameraView") -> tuple[np.ndarray, np.ndarray]:
    """Epipolar line of pixel p (view i) in view j as (unit direction, point on the line).

    Raises:
        GeometryError: if the camera centers coincide or p's ray passes through the center of j.
    """
    C_i, C_j = camera_center(view_i), camera_center(view_j)
    if np.linalg.norm(C_i - C_j) <= 1e-12 * (1.0 + np.linalg.norm(C_i)):
        raise GeometryError("Epipole undefined: camera centers coincide")
    p = np.asarray(p, dtype=np.float64)
    direction, valid = epipolar_directions(p, view_i, view_j)
    if not bool(valid):
        raise GeometryError(f"Epipolar line undefined: pixel {p} lies on the epipole")
    u, v = _ray_images(p, view_i, view_j)
    if abs(v[2]) > 1e-12 * (np.linalg.norm(v) + 1e-300):
        point = v[:2] / v[2]
    else:
        point = u[:2] / u[2]
    return direction, point


def depth_from_source_pixel(p: np.ndarray,
                            q: np.ndarray,
                            view_i: "CameraView",
                            view_j: "CameraView") -> np.ndarray:
    """Depth on p's ray (view i) whose image in view j is closest to pixel q.

    p has shape (..., 2); q has shape (..., 2) or (..., k, 2) for several targets per pixel.
    """
    u, v = _ray_images(p, view_i, view_j)
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == u.ndim + 1:
        u = u[..., None, :]
    a = u[..., :2] - q * u[..., 2:3]
    b = v[:2] - q * v[2]
    den = np.sum(a * a, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = -np.sum(a * b, axis=-1) / den
    return np.where(np.isfinite(d), d, np.nan)
