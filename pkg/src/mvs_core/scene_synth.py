####################################################################################################
# Synthetic multi-view scenes.
#
# Piecewise-planar worlds are ray cast analytically (nearest plane per pixel) into look-at
# cameras. Besides images and cameras, a render produces ground-truth depth, normals, plane ids,
# edges, per-pair visibility and a point cloud, plus monocular priors derived from the ground
# truth with configurable noise. Everything is deterministic for a given seed.
#
# World frame: y up. Cameras look along +z by default; image x right, y down.
####################################################################################################
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from mvs_core import api, file_naming
from mvs_core import configuration as root_cfg
from mvs_core.edge_prior import roberts_edges
from mvs_core.scene_io import (
    CameraView,
    PriorBundle,
    save_point_cloud,
    save_scene,
    write_mask,
    write_pfm,
)

logger = root_cfg.setup_logger("mvs_core")

MAX_RESOLUTION = 1024
MIN_RESOLUTION = 32
# Checker period in pixels at the reference depth
TEXTURE_PERIOD_PX = 16.0
NOISE_AMPLITUDE = 0.3
CHECKER_AMPLITUDE = 0.25
SPARSE_DOT_DEPTH = 0.4
SEAM_DEPTH = 0.3
# Voxel size of the ground-truth cloud relative to the median pixel footprint
CLOUD_VOXEL_FRACTION = 0.5


@dataclass
class PlaneSpec:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    texture: api.TEXTURE = api.TEXTURE.NOISE
    albedo: float = 0.5
    # Half side of a square patch around `point`; None for an unbounded plane
    extent: Optional[float] = None
    # Texture cell size in world units
    period: float = 0.5
    # Dark band along the plane's vertical axis through `point`
    seam: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64)
        if np.linalg.norm(n) == 0:
            raise ValueError("Plane normal must be nonzero")
        self.normal = tuple(n / np.linalg.norm(n))


@dataclass
class CameraSpec:
    center: tuple[float, float, float]
    target: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)


@dataclass
class SpecularDisk:
    center: tuple[float, float, float]
    radius: float
    view_ids: list[int] = field(default_factory=list)


@dataclass
class SceneSpec:
    name: str
    planes: list[PlaneSpec]
    cameras: list[CameraSpec]
    width: int = 160
    height: int = 120
    specular_disks: list[SpecularDisk] = field(default_factory=list)
    # Relative sigma of the mono depth prior and angular sigma (degrees) of the mono normal prior
    depth_noise: float = 0.0
    normal_noise_deg: float = 0.0
    image_noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (MIN_RESOLUTION <= self.width <= MAX_RESOLUTION and MIN_RESOLUTION <= self.height <= MAX_RESOLUTION):
            raise ValueError(f"Resolution {self.width}x{self.height} outside "
                             f"[{MIN_RESOLUTION}, {MAX_RESOLUTION}] per side")
        if not self.planes or not self.cameras:
            raise ValueError(f"Scene {self.name} needs at least one plane and one camera")


@dataclass(eq=False)
class RenderedScene:
    spec: SceneSpec
    views: list[tuple[CameraView, PriorBundle]]
    gt_depth: dict[int, np.ndarray]
    gt_normal: dict[int, np.ndarray]
    # Plane index + 1 per pixel
    gt_planes: dict[int, np.ndarray]
    gt_edges: dict[int, np.ndarray]
    # (view id, source id) -> mask of view pixels seen by the source
    gt_visibility: dict[tuple[int, int], np.ndarray]
    cloud: np.ndarray

    def camera_views(self) -> list[CameraView]:
        return [v for v, _ in self.views]


############################################################################################
# Cameras
############################################################################################
def look_at(cam: CameraSpec) -> tuple[np.ndarray, np.ndarray]:
    """(R, T) of a camera at `center` looking at `target` with image y pointing against `up`."""
    c = np.asarray(cam.center, dtype=np.float64)
    z = np.asarray(cam.target, dtype=np.float64) - c
    z /= np.linalg.norm(z)
    up = np.asarray(cam.up, dtype=np.float64)
    y = -up + np.dot(up, z) * z
    if np.linalg.norm(y) < 1e-9:
        raise ValueError("Camera up vector is parallel to the viewing direction")
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    R = np.stack([x, y, z])
    return R, -R @ c


def intrinsics(width: int, height: int) -> np.ndarray:
    f = 0.9 * width
    return np.array([[f, 0.0, (width - 1) / 2.0], [0.0, f, (height - 1) / 2.0], [0.0, 0.0, 1.0]])


############################################################################################
# Textures
############################################################################################
def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) spanning the plane; v follows world up where possible."""
    helper = np.array([0.0, 1.0, 0.0]) if abs(normal[1]) < 0.9 else np.array([0.0, 0.0, 1.0])
    v = helper - np.dot(helper, normal) * normal
    v /= np.linalg.norm(v)
    return np.cross(v, normal), v


def _lattice_hash(i: np.ndarray, j: np.ndarray, seed: int) -> np.ndarray:
    h = np.sin(i * 12.9898 + j * 78.233 + seed * 37.719) * 43758.5453
    return h - np.floor(h)


def shade(plane: PlaneSpec, points: np.ndarray) -> np.ndarray:
    """Intensity of the plane's texture at world points (..., 3)."""
    n = np.asarray(plane.normal)
    u, v = _plane_basis(n)
    rel = points - np.asarray(plane.point)
    s, t = rel @ u / plane.period, rel @ v / plane.period
    base = np.full(points.shape[:-1], plane.albedo)

    if plane.texture == api.TEXTURE.CHECKER:
        parity = (np.floor(s) + np.floor(t)) % 2
        out = base + CHECKER_AMPLITUDE * (2.0 * parity - 1.0)
    elif plane.texture == api.TEXTURE.NOISE:
        i0, j0 = np.floor(s), np.floor(t)
        fs, ft = s - i0, t - j0
        v00 = _lattice_hash(i0, j0, plane.seed)
        v10 = _lattice_hash(i0 + 1, j0, plane.seed)
        v01 = _lattice_hash(i0, j0 + 1, plane.seed)
        v11 = _lattice_hash(i0 + 1, j0 + 1, plane.seed)
        value = (v00 * (1 - fs) * (1 - ft) + v10 * fs * (1 - ft) + v01 * (1 - fs) * ft + v11 * fs * ft)
        out = base + NOISE_AMPLITUDE * (2.0 * value - 1.0)
    elif plane.texture == api.TEXTURE.SPARSE:
        # One dot per 4 x 4 cells
        ds = s / 4.0 - np.rint(s / 4.0)
        dt = t / 4.0 - np.rint(t / 4.0)
        out = np.where(np.hypot(ds, dt) < 0.1, base - SPARSE_DOT_DEPTH, base)
    else:
        out = base

    if plane.seam:
        out = np.where(np.abs(s) < 0.15, out - SEAM_DEPTH, out)
    return np.clip(out, 0.0, 1.0)


############################################################################################
# Ray casting
############################################################################################
def _plane_hits(planes: list[PlaneSpec], origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Ray parameter t per plane (P, ...) for rays origin + t * dirs; inf on a miss."""
    out = np.full((len(planes),) + dirs.shape[:-1], np.inf)
    for k, plane in enumerate(planes):
        n = np.asarray(plane.normal)
        den = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.dot(n, np.asarray(plane.point) - origin) / den
        ok = np.isfinite(t) & (t > 1e-9)
        if plane.extent is not None:
            u, v = _plane_basis(n)
            rel = origin + np.where(ok, t, 0.0)[..., None] * dirs - np.asarray(plane.point)
            ok &= (np.abs(rel @ u) <= plane.extent) & (np.abs(rel @ v) <= plane.extent)
        out[k] = np.where(ok, t, np.inf)
    return out


def _render_view(spec: SceneSpec, view_id: int, K: np.ndarray, R: np.ndarray, T: np.ndarray) -> dict:
    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w]
    rays_cam = np.stack([xs, ys, np.ones_like(xs)], axis=-1).astype(np.float64) @ np.linalg.inv(K).T
    dirs = rays_cam @ R
    center = -R.T @ T
    hits = _plane_hits(spec.planes, center, dirs)
    nearest = np.argmin(hits, axis=0)
    t = np.take_along_axis(hits, nearest[None], axis=0)[0]
    if not np.all(np.isfinite(t)):
        raise ValueError(f"Scene {spec.name}: view {view_id} has pixels that see no plane")

    points = center + t[..., None] * dirs
    clean = np.zeros((h, w))
    normals_world = np.zeros((h, w, 3))
    for k, plane in enumerate(spec.planes):
        sel = nearest == k
        if sel.any():
            clean[sel] = shade(plane, points[sel])
            normals_world[sel] = plane.normal
    normals_cam = normals_world @ R.T
    facing = np.sum(normals_cam * rays_cam, axis=-1, keepdims=True) > 0
    normals_cam = np.where(facing, -normals_cam, normals_cam)

    highlight = np.zeros((h, w), dtype=bool)
    for disk in spec.specular_disks:
        if view_id in disk.view_ids:
            highlight |= np.linalg.norm(points - np.asarray(disk.center), axis=-1) <= disk.radius
    # Depth is z-depth; rays_cam has unit z so t is the depth
    return {"depth": t, "normal": normals_cam, "planes": (nearest + 1).astype(np.uint16), "points": points,
            "clean": clean, "highlight": highlight}


def _occluded(spec: SceneSpec, points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """True where the segment from center to a point crosses any plane before reaching it."""
    seg = points - center
    hits = _plane_hits(spec.planes, center, seg)
    return np.any(hits < 1.0 - 1e-6, axis=0)


def _edges_from_planes(planes: np.ndarray) -> np.ndarray:
    edges = np.zeros(planes.shape, dtype=bool)
    dx = planes[:, 1:] != planes[:, :-1]
    dy = planes[1:, :] != planes[:-1, :]
    edges[:, 1:] |= dx
    edges[:, :-1] |= dx
    edges[1:, :] |= dy
    edges[:-1, :] |= dy
    return edges


def _perturb_normals(normals: np.ndarray, sigma_deg: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_deg <= 0:
        return normals.copy()
    noisy = normals + np.deg2rad(sigma_deg) * rng.normal(size=normals.shape)
    return noisy / np.linalg.norm(noisy, axis=-1, keepdims=True)


def render_views(spec: SceneSpec) -> RenderedScene:
    """Render a scene in memory."""
    rng = np.random.default_rng(spec.seed)
    K = intrinsics(spec.width, spec.height)
    poses = [look_at(cam) for cam in spec.cameras]
    renders = [_render_view(spec, vid, K, R, T) for vid, (R, T) in enumerate(poses)]

    views, gt_depth, gt_normal, gt_planes, gt_edges = [], {}, {}, {}, {}
    for vid, ((R, T), r) in enumerate(zip(poses, renders)):
        image = r["clean"].copy()
        image[r["highlight"]] = 1.0
        if spec.image_noise > 0:
            image = np.clip(image + spec.image_noise * rng.normal(size=image.shape), 0.0, 1.0)
        corrected = r["clean"] if r["highlight"].any() else None
        view = CameraView(vid, K.copy(), R, T, spec.width, spec.height, image, corrected,
                          f"{file_naming.IMAGES_DIR}/{vid}.png")

        depth = r["depth"]
        mono_depth = depth * (1.0 + spec.depth_noise * rng.normal(size=depth.shape)) if spec.depth_noise else depth.copy()
        mono_normal = _perturb_normals(r["normal"], spec.normal_noise_deg, rng)
        priors = PriorBundle(np.maximum(mono_depth, 1e-6), mono_normal, roberts_edges(image), r["highlight"])
        views.append((view, priors))
        gt_depth[vid], gt_normal[vid], gt_planes[vid] = depth, r["normal"], r["planes"]
        gt_edges[vid] = _edges_from_planes(r["planes"])

    gt_visibility = {}
    for vid, r in enumerate(renders):
        for sid, (R, T) in enumerate(poses):
            if sid == vid:
                continue
            cam = r["points"] @ R.T + T
            uvw = cam @ K.T
            with np.errstate(divide="ignore", invalid="ignore"):
                px = uvw[..., :2] / uvw[..., 2:3]
            inside = ((cam[..., 2] > 0) & (px[..., 0] > -0.5) & (px[..., 0] < spec.width - 0.5)
                      & (px[..., 1] > -0.5) & (px[..., 1] < spec.height - 0.5))
            gt_visibility[(vid, sid)] = inside & ~_occluded(spec, r["points"], -R.T @ T)

    cloud = _dedupe_cloud(np.concatenate([r["points"].reshape(-1, 3) for r in renders]),
                          CLOUD_VOXEL_FRACTION * float(np.median(np.concatenate(
                              [r["depth"].ravel() for r in renders]))) / K[0, 0])
    return RenderedScene(spec, views, gt_depth, gt_normal, gt_planes, gt_edges, gt_visibility, cloud)


def _dedupe_cloud(points: np.ndarray, voxel: float) -> np.ndarray:
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def gt_cloud(rendered: RenderedScene) -> np.ndarray:
    """Ground-truth surface points: every rendered pixel of every view, one point per voxel."""
    return rendered.cloud


def render(spec: SceneSpec, out_dir: Path | str) -> RenderedScene:
    """Render a scene and write it, with ground truth, in the scene layout."""
    out_dir = Path(out_dir)
    rendered = render_views(spec)
    save_scene(rendered.views, out_dir)
    for vid in rendered.gt_depth:
        write_pfm(file_naming.gt_depth_file(out_dir, vid), rendered.gt_depth[vid])
        write_pfm(file_naming.gt_normal_file(out_dir, vid), rendered.gt_normal[vid])
        planes_file = file_naming.gt_planes_file(out_dir, vid)
        planes_file.parent.mkdir(parents=True, exist_ok=True)
        if not cv2.imwrite(str(planes_file), rendered.gt_planes[vid]):
            raise OSError(f"Failed to write {planes_file}")
        write_mask(file_naming.gt_edges_file(out_dir, vid), rendered.gt_edges[vid])
    for (vid, sid), mask in rendered.gt_visibility.items():
        write_mask(file_naming.gt_visibility_file(out_dir, vid, sid), mask)
    save_point_cloud(file_naming.gt_cloud_file(out_dir), rendered.cloud)
    logger.info(f"Rendered {spec.name}: {len(rendered.views)} views at {spec.width}x{spec.height} "
                f"into {out_dir}")
    return rendered


############################################################################################
# Fixtures
############################################################################################
def _rig(target_z: float, baseline: float = 0.4, count: int = 5) -> list[CameraSpec]:
    offsets = [(0.0, 0.0), (baseline, 0.0), (-baseline, 0.0), (0.0, 0.75 * baseline), (0.0, -0.75 * baseline)]
    return [CameraSpec((x, y, 0.0), (0.0, 0.0, target_z)) for x, y in offsets[:count]]


def _period(width: int, depth: float) -> float:
    return TEXTURE_PERIOD_PX * depth / (0.9 * width)


def _planar3(width: int, height: int) -> SceneSpec:
    p = _period(width, 5.0)
    return SceneSpec(
        api.FIXTURE.PLANAR3,
        planes=[
            PlaneSpec((0.0, 0.0, 6.0), (0.0, 0.0, -1.0), api.TEXTURE.NOISE, 0.5, period=p, seed=1),
            PlaneSpec((-1.4, 0.0, 4.0), (1.0, 0.0, -0.6), api.TEXTURE.NOISE, 0.55, period=p, seed=2),
            PlaneSpec((0.0, -1.2, 0.0), (0.0, 1.0, 0.0), api.TEXTURE.CHECKER, 0.5, period=p),
        ],
        cameras=_rig(5.0), width=width, height=height, depth_noise=0.005, normal_noise_deg=2.0)


def _textureless_wall(width: int, height: int) -> SceneSpec:
    p = _period(width, 5.0)
    return SceneSpec(
        api.FIXTURE.TEXTURELESS_WALL,
        planes=[
            PlaneSpec((0.0, 0.0, 5.0), (0.0, 0.0, -1.0), api.TEXTURE.SPARSE, 0.6, period=p),
            PlaneSpec((-1.4, 0.0, 4.0), (1.0, 0.0, -0.6), api.TEXTURE.NOISE, 0.5, period=p, seed=3),
            PlaneSpec((0.0, -1.2, 0.0), (0.0, 1.0, 0.0), api.TEXTURE.CHECKER, 0.5, period=p),
        ],
        cameras=_rig(5.0), width=width, height=height, depth_noise=0.005, normal_noise_deg=2.0,
        image_noise=0.01)


def _occluder(width: int, height: int) -> SceneSpec:
    p = _period(width, 5.0)
    return SceneSpec(
        api.FIXTURE.OCCLUDER,
        planes=[
            PlaneSpec((0.0, 0.0, 6.0), (0.0, 0.0, -1.0), api.TEXTURE.NOISE, 0.5, period=p, seed=4),
            PlaneSpec((0.3, 0.1, 3.5), (0.0, 0.0, -1.0), api.TEXTURE.NOISE, 0.6, extent=0.5, period=p, seed=5),
        ],
        cameras=_rig(5.0, baseline=0.8), width=width, height=height)


def _specular_disk(width: int, height: int) -> SceneSpec:
    p = _period(width, 5.0)
    return SceneSpec(
        api.FIXTURE.SPECULAR_DISK,
        planes=[
            PlaneSpec((0.0, 0.0, 5.0), (0.0, 0.0, -1.0), api.TEXTURE.NOISE, 0.45, period=p, seed=6),
            PlaneSpec((0.0, -1.2, 0.0), (0.0, 1.0, 0.0), api.TEXTURE.CHECKER, 0.5, period=p),
        ],
        cameras=_rig(5.0), width=width, height=height,
        specular_disks=[SpecularDisk((0.2, 0.2, 5.0), 0.5, [0, 1, 3])],
        depth_noise=0.005, normal_noise_deg=2.0)


def _far_depth(width: int, height: int) -> SceneSpec:
    p = _period(width, 40.0)
    return SceneSpec(
        api.FIXTURE.FAR_DEPTH,
        planes=[
            PlaneSpec((0.0, 0.0, 40.0), (0.0, 0.0, -1.0), api.TEXTURE.NOISE, 0.5, period=p, seed=7),
            PlaneSpec((-8.0, 0.0, 34.0), (1.0, 0.0, -0.5), api.TEXTURE.NOISE, 0.5, period=p, seed=8),
        ],
        cameras=_rig(40.0), width=width, height=height, depth_noise=0.005, normal_noise_deg=2.0)


def _crease(width: int, height: int) -> SceneSpec:
    p = _period(width, 5.0)
    return SceneSpec(
        api.FIXTURE.CREASE,
        planes=[
            # x - z + 5 = 0 and -x - z + 5 = 0 meet at 90 degrees along x = 0, z = 5
            PlaneSpec((-0.8, 0.0, 4.2), (1.0, 0.0, -1.0), api.TEXTURE.CONSTANT, 0.6, period=p, seam=True),
            PlaneSpec((0.8, 0.0, 4.2), (-1.0, 0.0, -1.0), api.TEXTURE.CONSTANT, 0.6, period=p),
        ],
        cameras=_rig(5.0), width=width, height=height, depth_noise=0.002, normal_noise_deg=1.0)


_FIXTURES = {
    api.FIXTURE.PLANAR3: _planar3,
    api.FIXTURE.TEXTURELESS_WALL: _textureless_wall,
    api.FIXTURE.OCCLUDER: _occluder,
    api.FIXTURE.SPECULAR_DISK: _specular_disk,
    api.FIXTURE.FAR_DEPTH: _far_depth,
    api.FIXTURE.CREASE: _crease,
}


def standard_fixtures(width: int = 160, height: int = 120) -> list[SceneSpec]:
    return [build(width, height) for build in _FIXTURES.values()]


def fixture(name: str, width: int = 160, height: int = 120) -> SceneSpec:
    try:
        key = api.FIXTURE(name)
    except ValueError as e:
        raise ValueError(f"Unknown fixture {name!r}; choose from {[f.value for f in api.FIXTURE]}") from e
    return _FIXTURES[key](width, height)
