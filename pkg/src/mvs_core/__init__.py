# filepath: mvs_core/__init__.py

# Re-export the pipeline entry points
# Dynamically fetch the version from the package metadata
import importlib.metadata

from . import api, configuration
from .config_objects import MvsCfg
from .errors import (
    ConfigError,
    GeometryError,
    MapFormatError,
    MvsError,
    SceneParseError,
    SceneValidationError,
)
from .evaluation import EvalReport, evaluate
from .fusion import FusedCloud, fuse
from .scene_io import CameraView, DepthNormalResult, PriorBundle, load_scene
from .solver import run_scene, run_view

try:
    __version__ = importlib.metadata.version("mvs-core")
except importlib.metadata.PackageNotFoundError:
    __version__ = "unknown"

__all__ = [
    "CameraView",
    "ConfigError",
    "DepthNormalResult",
    "EvalReport",
    "FusedCloud",
    "GeometryError",
    "MapFormatError",
    "MvsCfg",
    "MvsError",
    "PriorBundle",
    "SceneParseError",
    "SceneValidationError",
    "api",
    "configuration",
    "evaluate",
    "fuse",
    "load_scene",
    "run_scene",
    "run_view",
]
