####################################################################################################
# Point cloud evaluation: accuracy, completeness and F1 at a distance threshold.
#
# Plain bidirectional nearest-neighbour distances with an exact KD-tree; there is no occlusion
# masking of the ground truth.
####################################################################################################
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from mvs_core import api
from mvs_core import configuration as root_cfg

logger = root_cfg.setup_logger("mvs_core")

# Default threshold as a fraction of the ground-truth scene diameter
DEFAULT_TAU_FRACTION = 0.005


@dataclass
class EvalReport:
    threshold: float
    accuracy: float
    completeness: float
    f1: float
    num_points: int = 0
    num_gt_points: int = 0


def f1_score(accuracy: float, completeness: float) -> float:
    total = accuracy + completeness
    return 2.0 * accuracy * completeness / total if total > 0 else 0.0


def _within(query: np.ndarray, reference: np.ndarray, tau: float) -> float:
    """Percentage of query points whose nearest reference point lies within tau."""
    if len(query) == 0:
        return 0.0
    if len(reference) == 0:
        return 0.0
    dist, _ = cKDTree(reference).query(query, k=1, workers=-1)
    return 100.0 * float(np.mean(dist <= tau))


def evaluate(cloud: np.ndarray, gt_cloud: np.ndarray, tau: float) -> EvalReport:
    """Accuracy (cloud -> gt), completeness (gt -> cloud) and their harmonic mean, in percent."""
    if tau <= 0:
        raise ValueError(f"Evaluation threshold must be positive, got {tau}")
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    gt_cloud = np.asarray(gt_cloud, dtype=np.float64).reshape(-1, 3)
    accuracy = _within(cloud, gt_cloud, tau)
    completeness = _within(gt_cloud, cloud, tau)
    report = EvalReport(tau, accuracy, completeness, f1_score(accuracy, completeness), len(cloud), len(gt_cloud))
    logger.info(f"tau={tau:.4g} accuracy={accuracy:.2f} completeness={completeness:.2f} f1={report.f1:.2f}")
    return report


def scene_diameter(points: np.ndarray) -> float:
    """Diagonal of the axis-aligned bounding box."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return 0.0
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def default_tau(gt_cloud: np.ndarray) -> float:
    return DEFAULT_TAU_FRACTION * scene_diameter(gt_cloud)


def report_table(reports: list[EvalReport]) -> str:
    """Fixed-width table, one row per threshold."""
    df = pd.DataFrame([asdict(r) for r in reports],
                      columns=["threshold", "accuracy", "completeness", "f1", "num_points", "num_gt_points"])
    return df.to_string(index=False, float_format=lambda v: f"{v:.4f}",
                        formatters={"accuracy": "{:.2f}".format,
                                    "completeness": "{:.2f}".format,
                                    "f1": "{:.2f}".format})


def report_json(reports: list[EvalReport], **meta: Any) -> dict:
    return {
        "schema": api.REPORT_SCHEMA_VERSION,
        "created": api.utc_to_iso_str(),
        **{k: str(v) if isinstance(v, Path) else v for k, v in meta.items()},
        "reports": [asdict(r) for r in reports],
    }
