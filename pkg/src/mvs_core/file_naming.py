####################################################################################################
# Scene directory layout and result file names.
#
# All paths are relative to a scene root (inputs) or an output directory (results):
#
#   cameras.txt                    one line per view
#   images/<id>.png                8-bit image
#   corrected/<id>.png             optional highlight-removed image
#   priors/<id>_depth.pfm          monocular depth
#   priors/<id>_normal.pfm         monocular normal
#   priors/<id>_edges.png          edge map
#   priors/<id>_highlight.png      optional highlight mask
#   gt/...                         ground truth, written by scene_synth only
#
# A solve output directory holds <id>_depth.pfm, <id>_normal.pfm, <id>_cost.pfm, <id>_reliable.png,
# progress.csv and run_record.yaml; the pipeline adds fused.ply and fused_eval.json.
####################################################################################################
from pathlib import Path

CAMERAS_FILE = "cameras.txt"
IMAGES_DIR = "images"
CORRECTED_DIR = "corrected"
PRIORS_DIR = "priors"
GT_DIR = "gt"
GT_CLOUD_FILE = "cloud.ply"
PROGRESS_FILE = "progress.csv"
RUN_RECORD_FILE = "run_record.yaml"
FUSED_CLOUD_FILE = "fused.ply"


def cameras_file(scene: Path) -> Path:
    return Path(scene) / CAMERAS_FILE


def image_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / IMAGES_DIR / f"{view_id}.png"


def corrected_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / CORRECTED_DIR / f"{view_id}.png"


def prior_depth_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / PRIORS_DIR / f"{view_id}_depth.pfm"


def prior_normal_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / PRIORS_DIR / f"{view_id}_normal.pfm"


def prior_edges_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / PRIORS_DIR / f"{view_id}_edges.png"


def prior_highlight_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / PRIORS_DIR / f"{view_id}_highlight.png"


############################################################
# Ground truth (synthetic scenes)
############################################################
def gt_depth_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / GT_DIR / f"{view_id}_depth.pfm"


def gt_normal_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / GT_DIR / f"{view_id}_normal.pfm"


def gt_planes_file(scene: Path, view_id: int) -> Path:
    """16-bit PNG of plane index + 1 per pixel; 0 where no plane was hit."""
    return Path(scene) / GT_DIR / f"{view_id}_planes.png"


def gt_edges_file(scene: Path, view_id: int) -> Path:
    return Path(scene) / GT_DIR / f"{view_id}_edges.png"


def gt_visibility_file(scene: Path, view_id: int, source_id: int) -> Path:
    return Path(scene) / GT_DIR / f"{view_id}_vis_{source_id}.png"


def gt_cloud_file(scene: Path) -> Path:
    return Path(scene) / GT_DIR / GT_CLOUD_FILE


############################################################
# Solver outputs
############################################################
def result_depth_file(out_dir: Path, view_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_depth.pfm"


def result_normal_file(out_dir: Path, view_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_normal.pfm"


def result_cost_file(out_dir: Path, view_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_cost.pfm"


def result_reliable_file(out_dir: Path, view_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_reliable.png"


def result_view_ids(out_dir: Path) -> list[int]:
    """View ids for which a depth map exists in a solve output directory."""
    ids = []
    for f in Path(out_dir).glob("*_depth.pfm"):
        stem = f.name[: -len("_depth.pfm")]
        if stem.isdigit():
            ids.append(int(stem))
    return sorted(ids)


def atlas_label_file(out_dir: Path, view_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_atlas.png"


def atlas_regions_file(out_dir: Path, view_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_atlas.json"


def visibility_mask_file(out_dir: Path, view_id: int, source_id: int) -> Path:
    return Path(out_dir) / f"{view_id}_visible_{source_id}.png"


def eval_json_file(cloud_file: Path) -> Path:
    """Machine-readable evaluation report written alongside the evaluated cloud."""
    cloud_file = Path(cloud_file)
    return cloud_file.with_name(cloud_file.stem + "_eval.json")
