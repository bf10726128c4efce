####################################################################################################
# The config_validator checks a loaded scene (cameras, images and priors) before any stage runs.
####################################################################################################
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

import numpy as np

from mvs_core import configuration as root_cfg

if TYPE_CHECKING:
    from mvs_core.scene_io import CameraView, PriorBundle

logger = root_cfg.setup_logger("mvs_core")

MIN_IMAGE_SIZE = 32
ROTATION_TOLERANCE = 1e-6
NORMAL_TOLERANCE = 1e-4


class ValidationRule(ABC):
    """ Base class for validation rules. Extend this class to implement specific rules. """
    @abstractmethod
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        """
        Validate one view and its priors.

        Args:
            view: The calibrated view.
            priors: The monocular priors loaded for the view.

        Returns:
            tuple: (bool, str) where the boolean indicates success (True) or failure (False),
                   and the string contains an error message if validation fails.
        """
        raise NotImplementedError("Subclasses must implement the validate method.")

###########################################################################################################
# Camera rules
###########################################################################################################

# Rule 1: the intrinsic matrix is normalised (K[2][2] = 1)
class Rule1_intrinsics_normalised(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        if view.K.shape != (3, 3) or view.K[2, 2] != 1.0:
            return False, f"View {view.id}: K[2][2] must be 1"
        if view.K[0, 0] <= 0 or view.K[1, 1] <= 0:
            return False, f"View {view.id}: focal lengths must be positive"
        return True, ""

# Rule 2: the rotation is orthonormal
class Rule2_rotation_orthonormal(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        err = np.abs(view.R.T @ view.R - np.eye(3)).max()
        if err > ROTATION_TOLERANCE:
            return False, f"View {view.id}: R is not orthonormal (max |R^T R - I| = {err:.3g})"
        return True, ""

# Rule 3: the pixel grid is large enough to hold a patch
class Rule3_minimum_size(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        if view.width < MIN_IMAGE_SIZE or view.height < MIN_IMAGE_SIZE:
            return False, (f"View {view.id}: {view.width}x{view.height} is below the "
                           f"{MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE} minimum")
        return True, ""

# Rule 4: the images match the declared dimensions
class Rule4_image_dimensions(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        expected = (view.height, view.width)
        if view.image.shape[:2] != expected:
            return False, f"View {view.id}: image is {view.image.shape[:2]}, camera declares {expected}"
        if view.corrected_image is not None and view.corrected_image.shape[:2] != expected:
            return False, f"View {view.id}: corrected image is {view.corrected_image.shape[:2]}, expected {expected}"
        return True, ""

###########################################################################################################
# Prior rules
###########################################################################################################

# Rule 5: every prior map matches the view
class Rule5_prior_dimensions(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        expected = (view.height, view.width)
        maps = {
            "mono_depth": priors.mono_depth,
            "mono_normal": priors.mono_normal,
            "edge_map": priors.edge_map,
            "highlight_mask": priors.highlight_mask,
        }
        for name, m in maps.items():
            if m.shape[:2] != expected:
                return False, f"View {view.id}: {name} is {m.shape[:2]}, expected {expected}"
        if priors.mono_normal.ndim != 3 or priors.mono_normal.shape[2] != 3:
            return False, f"View {view.id}: mono_normal must have 3 channels"
        return True, ""

# Rule 6: monocular depth is finite and nonnegative
class Rule6_depth_nonnegative(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        d = priors.mono_depth
        if not np.all(np.isfinite(d)) or (d < 0).any():
            return False, f"View {view.id}: mono_depth must be finite and nonnegative"
        return True, ""

# Rule 7: monocular normals are unit vectors
class Rule7_unit_normals(ValidationRule):
    def validate(self, view: "CameraView", priors: "PriorBundle") -> tuple[bool, str]:
        norms = np.linalg.norm(priors.mono_normal, axis=-1)
        err = np.abs(norms - 1.0).max() if norms.size else 0.0
        if not np.isfinite(err) or err > NORMAL_TOLERANCE:
            return False, f"View {view.id}: mono_normal entries must have unit norm (max error {err:.3g})"
        return True, ""


RULE_SET: list[ValidationRule] = [
    Rule1_intrinsics_normalised(),
    Rule2_rotation_orthonormal(),
    Rule3_minimum_size(),
    Rule4_image_dimensions(),
    Rule5_prior_dimensions(),
    Rule6_depth_nonnegative(),
    Rule7_unit_normals(),
]


def validate_scene(views: list[tuple["CameraView", "PriorBundle"]]) -> tuple[bool, list[str]]:
    """
    Validate a scene using all rules.

    Args:
        views: (CameraView, PriorBundle) pairs as loaded.

    Returns:
        tuple: (bool, list) where the boolean indicates overall success (True) or failure (False),
                and the list contains error messages for all failed rules.
    """
    is_valid = True
    errors = []

    if not views:
        return False, ["Scene contains no views."]

    # Cross-view rule: ids are unique
    seen: set[int] = set()
    for view, _ in views:
        if view.id in seen:
            is_valid = False
            errors.append(f"Duplicate view id {view.id}.")
        seen.add(view.id)

    for view, priors in views:
        for rule in RULE_SET:
            try:
                success, error_message = rule.validate(view, priors)
                if not success:
                    is_valid = False
                    errors.append(error_message)
            except Exception as e:
                is_valid = False
                errors.append(f"View {view.id}: error in rule {rule.__class__.__name__}: {e!s}")

    if not is_valid:
        logger.warning(f"Scene validation found {len(errors)} problem(s)")
    return is_valid, errors
