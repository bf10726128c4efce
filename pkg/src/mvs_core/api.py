####################################################################################################
# MVS Core API
#
# Constants and enums shared across the pipeline stages, the CLI and the on-disk artifacts.
####################################################################################################
from datetime import datetime
from enum import IntEnum, StrEnum
from typing import Optional
from zoneinfo import ZoneInfo


############################################################
# CLI exit codes
############################################################
class EXIT_CODE(IntEnum):
    OK = 0
    USAGE = 1
    VALIDATION = 2
    RUNTIME = 3


############################################################
# Synthetic scene fixtures
############################################################
class FIXTURE(StrEnum):
    PLANAR3 = "planar3"
    TEXTURELESS_WALL = "textureless_wall"
    OCCLUDER = "occluder"
    SPECULAR_DISK = "specular_disk"
    FAR_DEPTH = "far_depth"
    CREASE = "crease"


class TEXTURE(StrEnum):
    CHECKER = "checker"
    NOISE = "noise"
    CONSTANT = "constant"
    # Constant albedo with sparse dark dots on a coarse lattice
    SPARSE = "sparse"


############################################################
# Epipolar interval aggregation
#
# ORDER_STATISTIC aggregates over every visible view using the mu-th extremes.
# FORMULA takes the min/max envelope over the first mu visible views.
############################################################
class INTERVAL_MODE(StrEnum):
    ORDER_STATISTIC = "order_statistic"
    FORMULA = "formula"


############################################################
# Per-pixel cost classes used by the solver within one pass
############################################################
class COST_CLASS(IntEnum):
    PLAIN = 0  # Reliable pixel: whole-patch multi-view cost
    DEFORMABLE = 1  # Unreliable pixel: central patch plus anchor sub-patches
    HIGHLIGHT = 2  # Unreliable pixel inside the highlight mask: anchor sub-patches only
    FROZEN = 3  # Reliable highlight pixel: excluded from updates


# Progress journal columns, one row per view and outer pass
PROGRESS_FIELDS = ["timestamp", "view", "pass", "mean_cost", "reliable_frac", "degenerate_frac"]

# Evaluation report JSON schema version
REPORT_SCHEMA_VERSION = 1

# Cost value used for "no evidence" (invisible, degenerate or textureless)
MAX_COST = 2.0


############################################################
# Timestamp helpers
############################################################
def utc_now() -> datetime:
    return datetime.now(ZoneInfo("UTC"))


def utc_to_iso_str(t: Optional[datetime] = None) -> str:
    """Return the timestamp as an ISO 8601 string; defaults to now."""
    if t is None:
        t = utc_now()
    return t.isoformat(timespec="seconds")


def utc_to_fname_str(t: Optional[datetime] = None) -> str:
    """Return a timestamp that can be embedded in a file name."""
    if t is None:
        t = utc_now()
    return t.strftime("%Y%m%d_%H%M%S")
