####################################################################################################
# Scene input/output.
#
# Loads cameras, images and monocular priors from the scene layout described in file_naming, and
# saves depth/normal results (PFM + PNG) and point clouds (PLY).
####################################################################################################
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from plyfile import PlyData, PlyElement

from mvs_core import config_validator, file_naming
from mvs_core import configuration as root_cfg
from mvs_core.errors import MapFormatError, SceneParseError, SceneValidationError
from mvs_core.geometry import orient_to_camera, pixel_rays

logger = root_cfg.setup_logger("mvs_core")

# id fx fy cx cy r11..r33 t1 t2 t3 width height image_path
CAMERA_LINE_TOKENS = 20


@dataclass(eq=False)
class CameraView:
    """One calibrated image. R, T map world to camera coordinates."""
    id: int
    K: np.ndarray
    R: np.ndarray
    T: np.ndarray
    width: int
    height: int
    image: np.ndarray
    corrected_image: Optional[np.ndarray] = None
    image_path: str = ""
    has_corrected: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        self.has_corrected = self.corrected_image is not None
        if self.corrected_image is None:
            self.corrected_image = self.image

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.T

    def matching_image(self, use_corrected: bool) -> np.ndarray:
        assert self.corrected_image is not None
        return self.corrected_image if use_corrected else self.image

    def scaled(self, width: int, height: int) -> "CameraView":
        """The same camera resampled to a new pixel grid."""
        sx, sy = width / self.width, height / self.height
        K = self.K.copy()
        K[0, 0] *= sx
        K[0, 1] *= sx
        K[0, 2] = (K[0, 2] + 0.5) * sx - 0.5
        K[1, 1] *= sy
        K[1, 2] = (K[1, 2] + 0.5) * sy - 0.5
        image = cv2.resize(self.image, (width, height), interpolation=cv2.INTER_AREA)
        corrected = None
        if self.has_corrected:
            assert self.corrected_image is not None
            corrected = cv2.resize(self.corrected_image, (width, height), interpolation=cv2.INTER_AREA)
        return CameraView(self.id, K, self.R.copy(), self.T.copy(), width, height, image, corrected,
                          self.image_path)


@dataclass(eq=False)
class PriorBundle:
    """Monocular priors for one view."""
    mono_depth: np.ndarray
    mono_normal: np.ndarray
    edge_map: np.ndarray
    highlight_mask: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))

    def __post_init__(self) -> None:
        if self.highlight_mask.size == 0:
            self.highlight_mask = np.zeros(self.mono_depth.shape, dtype=bool)

    def scaled(self, width: int, height: int) -> "PriorBundle":
        depth = cv2.resize(self.mono_depth, (width, height), interpolation=cv2.INTER_NEAREST)
        normal = cv2.resize(self.mono_normal, (width, height), interpolation=cv2.INTER_AREA)
        norm = np.linalg.norm(normal, axis=-1, keepdims=True)
        normal = np.where(norm > 0, normal / np.where(norm > 0, norm, 1.0), normal)

        def _mask(m: np.ndarray) -> np.ndarray:
            return cv2.resize(m.astype(np.float32), (width, height), interpolation=cv2.INTER_AREA) > 0

        return PriorBundle(depth, normal, _mask(self.edge_map), _mask(self.highlight_mask))


@dataclass(eq=False)
class DepthNormalResult:
    """Per-view solver output."""
    depth: np.ndarray
    normal: np.ndarray
    cost: np.ndarray
    reliable: np.ndarray
    view_id: int = 0
    # Set when the reference view is entirely highlight-masked
    degenerate: bool = False


############################################################################################
# PFM float maps
############################################################################################
def read_pfm(path: Path | str) -> np.ndarray:
    """Read a PFM file into an (H, W) or (H, W, 3) float32 array, top row first."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header = f.readline().decode("latin-1").rstrip()
            if header == "PF":
                channels = 3
            elif header == "Pf":
                channels = 1
            else:
                raise MapFormatError(f"{path}: not a PFM file (header {header!r})")
            dim_match = re.match(r"^(\d+)\s+(\d+)\s*$", f.readline().decode("latin-1"))
            if not dim_match:
                raise MapFormatError(f"{path}: malformed PFM dimensions")
            width, height = map(int, dim_match.groups())
            scale_line = f.readline().decode("latin-1").strip()
            try:
                scale = float(scale_line)
            except ValueError:
                raise MapFormatError(f"{path}: malformed PFM scale {scale_line!r}") from None
            if scale == 0 or not np.isfinite(scale):
                raise MapFormatError(f"{path}: PFM scale must be finite and non-zero, got {scale_line!r}")
            endian = "<" if scale < 0 else ">"
            data = np.frombuffer(f.read(), dtype=endian + "f4")
    except OSError as e:
        raise OSError(f"Failed to read {path}: {e}") from e

    expected = width * height * channels
    if data.size != expected:
        raise MapFormatError(f"{path}: expected {expected} values, found {data.size}")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def _pfm_header(path: Path, array: np.ndarray) -> str:
    """"PF" or "Pf" for a writable array; MapFormatError for a bad shape or NaN values."""
    if array.ndim == 3 and array.shape[2] == 3:
        header = "PF"
    elif array.ndim == 2:
        header = "Pf"
    else:
        raise MapFormatError(f"{path}: PFM needs (H, W) or (H, W, 3), got {array.shape}")
    if np.isnan(array).any():
        raise MapFormatError(f"{path}: refusing to write NaN values")
    return header


def write_pfm(path: Path | str, array: np.ndarray) -> None:
    """Write a little-endian PFM (negative scale), bottom row first. NaN values are rejected."""
    path = Path(path)
    array = np.asarray(array)
    header = _pfm_header(path, array)
    height, width = array.shape[:2]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(f"{header}\n{width} {height}\n-1.0\n".encode("latin-1"))
            f.write(np.flipud(array).astype("<f4").tobytes())
    except OSError as e:
        raise OSError(f"Failed to write {path}: {e}") from e


############################################################################################
# PNG masks and images
############################################################################################
def read_mask(path: Path | str) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise OSError(f"Failed to read {path}")
    return img > 127


def write_mask(path: Path | str, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.where(mask, 255, 0).astype(np.uint8)):
        raise OSError(f"Failed to write {path}")


def read_intensity(path: Path | str) -> np.ndarray:
    """Read an image as intensity in [0, 1]; colour is collapsed by (r + g + b) / 3."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise OSError(f"Failed to read {path}")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float64) / scale
    if img.ndim == 3:
        img = img[:, :, :3].mean(axis=2)
    return img


def write_intensity(path: Path | str, image: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)):
        raise OSError(f"Failed to write {path}")


############################################################################################
# Scenes
############################################################################################
def _parse_camera_line(tokens: list[str], path: Path, line_no: int) -> tuple:
    if len(tokens) != CAMERA_LINE_TOKENS:
        raise SceneParseError(path, line_no, f"expected {CAMERA_LINE_TOKENS} fields, found {len(tokens)}")
    try:
        view_id = int(tokens[0])
        fx, fy, cx, cy = (float(t) for t in tokens[1:5])
        R = np.array([float(t) for t in tokens[5:14]], dtype=np.float64).reshape(3, 3)
        T = np.array([float(t) for t in tokens[14:17]], dtype=np.float64)
        width, height = int(tokens[17]), int(tokens[18])
    except ValueError as e:
        raise SceneParseError(path, line_no, str(e)) from e
    K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    return view_id, K, R, T, width, height, tokens[19]


def read_cameras(path: Path | str) -> list[tuple]:
    """Parse the camera file into (id, K, R, T, width, height, image_path) tuples."""
    path = Path(path)
    if not path.exists():
        raise SceneParseError(path, 0, "camera file not found")
    cameras = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            cameras.append(_parse_camera_line(tokens, path, line_no))
    if not cameras:
        raise SceneParseError(path, 0, "no cameras defined")
    return cameras


def load_scene(path: Path | str) -> list[tuple[CameraView, PriorBundle]]:
    """Load every view of a scene with its priors.

    Missing highlight masks become all-zero masks, missing corrected images fall back to the
    original image and missing edge maps are computed with the Roberts operator.

    Raises:
        SceneParseError: malformed camera file (with line number).
        SceneValidationError: any view or prior violates the scene rules.
    """
    from mvs_core.edge_prior import roberts_edges

    scene = Path(path)
    cameras = read_cameras(file_naming.cameras_file(scene))
    loaded: list[tuple[CameraView, PriorBundle]] = []
    for view_id, K, R, T, width, height, image_path in cameras:
        image = read_intensity(scene / image_path)
        corrected = None
        if file_naming.corrected_file(scene, view_id).exists():
            corrected = read_intensity(file_naming.corrected_file(scene, view_id))
        view = CameraView(view_id, K, R, T, width, height, image, corrected, image_path)

        mono_depth = read_pfm(file_naming.prior_depth_file(scene, view_id)).astype(np.float64)
        mono_normal = read_pfm(file_naming.prior_normal_file(scene, view_id)).astype(np.float64)
        edges_file = file_naming.prior_edges_file(scene, view_id)
        edge_map = read_mask(edges_file) if edges_file.exists() else roberts_edges(image)
        highlight_file = file_naming.prior_highlight_file(scene, view_id)
        highlight = (read_mask(highlight_file) if highlight_file.exists()
                     else np.zeros(mono_depth.shape[:2], dtype=bool))
        loaded.append((view, PriorBundle(mono_depth, mono_normal, edge_map, highlight)))

    is_valid, failures = config_validator.validate_scene(loaded)
    if not is_valid:
        raise SceneValidationError(failures)

    # Normals must face the camera
    for view, priors in loaded:
        ys, xs = np.mgrid[0 : view.height, 0 : view.width]
        rays = pixel_rays(view.K, np.stack([xs, ys], axis=-1))
        priors.mono_normal = orient_to_camera(priors.mono_normal, rays)

    logger.info(f"Loaded {len(loaded)} views from {scene}")
    return loaded


def save_scene(views: list[tuple[CameraView, PriorBundle]], path: Path | str) -> Path:
    """Write views and priors in the scene layout."""
    scene = Path(path)
    scene.mkdir(parents=True, exist_ok=True)
    lines = ["# id fx fy cx cy r11 r12 r13 r21 r22 r23 r31 r32 r33 t1 t2 t3 width height image_path"]
    for view, priors in views:
        image_path = f"{file_naming.IMAGES_DIR}/{view.id}.png"
        values = [view.K[0, 0], view.K[1, 1], view.K[0, 2], view.K[1, 2], *view.R.ravel(), *view.T]
        lines.append(" ".join([str(view.id), *(repr(float(v)) for v in values),
                               str(view.width), str(view.height), image_path]))
        write_intensity(scene / image_path, view.image)
        if view.has_corrected:
            assert view.corrected_image is not None
            write_intensity(file_naming.corrected_file(scene, view.id), view.corrected_image)
        write_pfm(file_naming.prior_depth_file(scene, view.id), priors.mono_depth)
        write_pfm(file_naming.prior_normal_file(scene, view.id), priors.mono_normal)
        write_mask(file_naming.prior_edges_file(scene, view.id), priors.edge_map)
        if priors.highlight_mask.any():
            write_mask(file_naming.prior_highlight_file(scene, view.id), priors.highlight_mask)
    with open(file_naming.cameras_file(scene), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return scene


############################################################################################
# Depth / normal results
############################################################################################
def save_depth_normal(result: DepthNormalResult, out_dir: Path | str) -> None:
    """Write depth, normal and cost as PFM and the reliability mask as PNG.

    Every map is checked before the first file is written, so a bad map leaves no partial output.
    """
    out_dir = Path(out_dir)
    maps = {
        file_naming.result_depth_file(out_dir, result.view_id): np.asarray(result.depth),
        file_naming.result_normal_file(out_dir, result.view_id): np.asarray(result.normal),
        file_naming.result_cost_file(out_dir, result.view_id): np.asarray(result.cost),
    }
    for path, array in maps.items():
        _pfm_header(path, array)
        if array.shape[:2] != result.reliable.shape:
            raise MapFormatError(f"{path}: shape {array.shape} does not match the reliability mask "
                                 f"{result.reliable.shape}")
    for path, array in maps.items():
        write_pfm(path, array)
    write_mask(file_naming.result_reliable_file(out_dir, result.view_id), result.reliable)


def load_depth_normal(out_dir: Path | str, view_id: int) -> DepthNormalResult:
    out_dir = Path(out_dir)
    return DepthNormalResult(
        depth=read_pfm(file_naming.result_depth_file(out_dir, view_id)).astype(np.float64),
        normal=read_pfm(file_naming.result_normal_file(out_dir, view_id)).astype(np.float64),
        cost=read_pfm(file_naming.result_cost_file(out_dir, view_id)).astype(np.float64),
        reliable=read_mask(file_naming.result_reliable_file(out_dir, view_id)),
        view_id=view_id,
    )


############################################################################################
# Point clouds
############################################################################################
def save_point_cloud(path: Path | str,
                     positions: np.ndarray,
                     normals: Optional[np.ndarray] = None,
                     colors: Optional[np.ndarray] = None,
                     text: bool = False) -> Path:
    """Write a PLY vertex cloud (binary little-endian unless text=True)."""
    path = Path(path)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    dtype = [("x", "f4"), ("y", "f4"), ("z", "f4")]
    if normals is not None:
        dtype += [("nx", "f4"), ("ny", "f4"), ("nz", "f4")]
    if colors is not None:
        dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vertex = np.empty(len(positions), dtype=dtype)
    for i, axis in enumerate("xyz"):
        vertex[axis] = positions[:, i]
    if normals is not None:
        normals = np.asarray(normals).reshape(-1, 3)
        for i, axis in enumerate(("nx", "ny", "nz")):
            vertex[axis] = normals[:, i]
    if colors is not None:
        colors = np.asarray(colors).reshape(-1, 3)
        for i, axis in enumerate(("red", "green", "blue")):
            vertex[axis] = colors[:, i]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        PlyData([PlyElement.describe(vertex, "vertex")], text=text, byte_order="<").write(str(path))
    except OSError as e:
        raise OSError(f"Failed to write {path}: {e}") from e
    logger.debug(f"Saved {len(positions)} points to {path}")
    return path


def read_point_cloud(path: Path | str) -> tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    """Read a PLY vertex cloud as (positions, normals or None, colors or None)."""
    path = Path(path)
    try:
        ply = PlyData.read(str(path))
    except OSError as e:
        raise OSError(f"Failed to read {path}: {e}") from e
    except Exception as e:
        raise MapFormatError(f"{path}: malformed PLY ({e})") from e
    if "vertex" not in ply:
        raise MapFormatError(f"{path}: no vertex element")
    v = ply["vertex"].data
    names = v.dtype.names or ()
    positions = np.stack([v["x"], v["y"], v["z"]], axis=-1).astype(np.float64).reshape(-1, 3)
    normals = None
    if "nx" in names:
        normals = np.stack([v["nx"], v["ny"], v["nz"]], axis=-1).astype(np.float64).reshape(-1, 3)
    colors = None
    if "red" in names:
        colors = np.stack([v["red"], v["green"], v["blue"]], axis=-1).astype(np.uint8).reshape(-1, 3)
    return positions, normals, colors
