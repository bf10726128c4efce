####################################################################################################
# Typed configuration for the reconstruction pipeline.
#
# MvsCfg holds every tunable parameter with its default. Values are overridden (lowest to highest
# precedence) by DVP_<KEY> environment variables, a flat key=value config file and CLI flags.
# See configuration.load_mvs_cfg().
####################################################################################################
import logging

from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from mvs_core import api


class MvsCfg(BaseSettings):
    """Effective parameters for one reconstruction run."""

    model_config = SettingsConfigDict(extra="forbid", env_prefix="dvp_", validate_assignment=True)

    ############################################################
    # Depth-normal-edge aligned prior
    ############################################################
    # Minimum region size (pixels) for planarization
    eta: int = Field(default=300, ge=3)
    # Plane similarity gate shared by erosion (<=) and dilation (>=)
    varphi: float = 0.5
    # Normal similarity gate on boundary pixels
    phi: float = 0.4
    # Inlier-ratio improvement required for a split
    gamma: float = 1.2
    # Minimum inlier ratio for merging and pixel filtering
    kappa: float = Field(default=0.7, ge=0.0, le=1.0)
    # Point-to-plane distance for pixel filtering, mono-depth units
    delta: float = Field(default=0.8, gt=0.0)
    # Gradient floor for the Roberts edge threshold
    eps_grad: float = Field(default=0.005, ge=0.0)
    # Roberts threshold on gradient magnitude; 0 selects Otsu
    roberts_threshold: float = Field(default=0.0, ge=0.0)
    ransac_iterations: int = Field(default=256, ge=1)
    ransac_threshold_frac: float = Field(default=0.01, gt=0.0)
    ransac_max_points: int = Field(default=2000, ge=3)
    erosion_max_passes: int = Field(default=5, ge=1)
    atlas_rounds: int = Field(default=3, ge=1)
    normal_search_radius: int = Field(default=3, ge=1)
    filter_passes: int = Field(default=8, ge=1)

    ############################################################
    # Matching cost
    ############################################################
    patch_size: int = 11
    patch_step: int = Field(default=5, ge=1)
    sub_patch_size: int = 11
    sub_patch_step: int = Field(default=2, ge=1)
    # Weight of the central patch in the deformable cost
    lam: float = Field(default=0.25, ge=0.0, le=1.0)
    sigma_color: float = Field(default=0.1, gt=0.0)
    # Spatial bilateral sigma; 0 selects size*step/3
    sigma_spatial: float = Field(default=0.0, ge=0.0)
    # Fraction of dropped (out-of-image) samples above which a patch is invisible
    max_dropped_frac: float = Field(default=0.5, ge=0.0, le=1.0)

    ############################################################
    # Deformation
    ############################################################
    num_sectors: int = Field(default=8, ge=3)
    candidates_per_sector: int = Field(default=4, ge=1)
    anchor_search_radius: int = Field(default=64, ge=1)

    ############################################################
    # View selection and visibility restoration
    ############################################################
    vs_sigma: float = Field(default=0.3, gt=0.0)
    vs_tau_good: float = 0.8
    vs_tau_bad: float = 1.2
    eps_reproj: float = Field(default=2.0, gt=0.0)
    reproj_window: int = Field(default=11, ge=1)
    visibility_floor_weight: float = Field(default=0.1, gt=0.0, le=1.0)

    ############################################################
    # Solver
    ############################################################
    tau_rel: float = Field(default=0.3, gt=0.0)
    outer_passes: int = Field(default=3, ge=1)
    sweeps_per_pass: int = Field(default=2, ge=1)
    refine_samples: int = Field(default=6, ge=0)
    # Samples inside the band the depth intervals leave out, each a quarter as wide as the last
    fine_samples: int = Field(default=4, ge=0)
    normal_max_tries: int = Field(default=32, ge=1)
    # Std-dev of the normal perturbation in the first pass; halves every pass
    normal_perturbation: float = Field(default=0.3, gt=0.0)
    alpha: float = Field(default=1.0, gt=0.0)
    beta: float = Field(default=4.0, gt=0.0)
    mu: int = Field(default=3, ge=1)
    interval_mode: api.INTERVAL_MODE = api.INTERVAL_MODE.ORDER_STATISTIC
    # Relative depth perturbation used when epipolar intervals are unavailable or disabled
    fixed_interval_frac: float = Field(default=0.01, gt=0.0, lt=1.0)
    mono_seed_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    # 0 derives the range from the monocular depth priors
    depth_min: float = Field(default=0.0, ge=0.0)
    depth_max: float = Field(default=0.0, ge=0.0)
    multi_scale: bool = True

    ############################################################
    # Component switches
    ############################################################
    use_deformation: bool = True
    # Anchor hypotheses as propagation candidates
    use_anchor_propagation: bool = True
    use_prior_atlas: bool = True
    use_normal_prior: bool = True
    use_erosion_dilation: bool = True
    use_pixel_filter: bool = True
    use_area_max: bool = True
    use_visibility_restoration: bool = True
    use_visibility_filter: bool = True
    use_hemisphere: bool = True
    use_depth_intervals: bool = True
    use_highlight_rules: bool = True
    use_corrected_images: bool = True

    ############################################################
    # Fusion
    ############################################################
    fusion_min_consistent: int = Field(default=2, ge=1)
    fusion_reproj_px: float = Field(default=2.0, gt=0.0)
    fusion_rel_depth: float = Field(default=0.01, gt=0.0)
    fusion_normal_deg: float = Field(default=10.0, gt=0.0)

    ############################################################
    # Run control
    ############################################################
    seed: int = 0
    # 0 uses every logical core
    threads: int = Field(default=0, ge=0)
    log_level: int = logging.INFO

    @field_validator("patch_size", "sub_patch_size", "reproj_window")
    @classmethod
    def _must_be_odd(cls, v: int) -> int:
        if v < 1 or v % 2 == 0:
            raise ValueError(f"must be a positive odd integer, got {v}")
        return v

    @model_validator(mode="after")
    def _thresholds_ordered(self) -> "MvsCfg":
        if self.vs_tau_good >= self.vs_tau_bad:
            raise ValueError("vs_tau_good must be below vs_tau_bad")
        if self.depth_max > 0 and self.depth_min >= self.depth_max:
            raise ValueError("depth_min must be below depth_max")
        return self
