####################################################################################################
# Run record: a YAML description of a solve, written next to its depth maps so results can be
# traced back to the exact configuration and package version that produced them.
####################################################################################################
from enum import Enum
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from yaml import Dumper

from mvs_core import api, file_naming
from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.scene_io import DepthNormalResult

logger = root_cfg.setup_logger("mvs_core")

RECORD_VERSION = "V1"


def package_version() -> str:
    try:
        return version("mvs-core")
    except PackageNotFoundError:
        return "unknown"


def _enum_representer(dumper: Dumper, data: Enum) -> yaml.Node:
    """Represent an Enum as a plain string in YAML"""
    return dumper.represent_scalar("tag:yaml.org,2002:str", str(data.value))


class _RecordDumper(Dumper):
    pass


_RecordDumper.add_multi_representer(Enum, _enum_representer)


def _view_summary(result: DepthNormalResult) -> dict[str, Any]:
    valid = result.depth > 0
    return {
        "view": int(result.view_id),
        "width": int(result.depth.shape[1]),
        "height": int(result.depth.shape[0]),
        "mean_cost": float(np.mean(result.cost)),
        "reliable_frac": float(np.mean(result.reliable)),
        "median_depth": float(np.median(result.depth[valid])) if valid.any() else 0.0,
        "degenerate": bool(result.degenerate),
    }


def build_run_record(cfg: MvsCfg, scene_path: Path | str, results: dict[int, DepthNormalResult]) -> dict:
    return {
        "version": RECORD_VERSION,
        "package_version": package_version(),
        "timestamp": api.utc_to_iso_str(),
        "scene": str(scene_path),
        "config": cfg.model_dump(),
        "views": [_view_summary(results[vid]) for vid in sorted(results)],
    }


def save_run_record(out_dir: Path | str,
                    cfg: MvsCfg,
                    scene_path: Path | str,
                    results: dict[int, DepthNormalResult]) -> Path:
    """Write run_record.yaml into out_dir."""
    record = build_run_record(cfg, scene_path, results)
    fname = Path(out_dir) / file_naming.RUN_RECORD_FILE
    fname.parent.mkdir(parents=True, exist_ok=True)
    with open(fname, "w", encoding="utf-8") as f:
        yaml.dump(record, f, Dumper=_RecordDumper, sort_keys=False)
    logger.debug(f"Saved run record {fname}")
    return fname


def load_run_record(path: Path | str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)
