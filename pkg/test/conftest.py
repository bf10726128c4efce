from typing import Callable

import numpy as np
import pytest

from mvs_core import scene_synth
from mvs_core.config_objects import MvsCfg
from mvs_core.scene_io import CameraView

# Small enough for quick tests, large enough for an 11x11 patch
TINY_WIDTH = 64
TINY_HEIGHT = 48


def _make_view(view_id: int,
               center: tuple[float, float, float],
               target: tuple[float, float, float] = (0.0, 0.0, 5.0),
               width: int = TINY_WIDTH,
               height: int = TINY_HEIGHT,
               image: np.ndarray | None = None) -> CameraView:
    """A look-at camera with an optional image (flat grey by default)."""
    R, T = scene_synth.look_at(scene_synth.CameraSpec(center, target))
    K = scene_synth.intrinsics(width, height)
    if image is None:
        image = np.full((height, width), 0.5)
    return CameraView(view_id, K, R, T, width, height, image)


@pytest.fixture
def make_view() -> Callable[..., CameraView]:
    return _make_view


@pytest.fixture
def fast_cfg() -> MvsCfg:
    """Reduced iteration counts for solver tests on tiny scenes."""
    return MvsCfg(outer_passes=2, sweeps_per_pass=1, refine_samples=4, eta=100, anchor_search_radius=24,
                  ransac_iterations=64, threads=1, seed=3, multi_scale=False)


@pytest.fixture(scope="session")
def planar3_tiny() -> scene_synth.RenderedScene:
    return scene_synth.render_views(scene_synth.fixture("planar3", TINY_WIDTH, TINY_HEIGHT))


@pytest.fixture(scope="session")
def occluder_small() -> scene_synth.RenderedScene:
    return scene_synth.render_views(scene_synth.fixture("occluder", 96, 72))


@pytest.fixture(scope="session")
def crease_small() -> scene_synth.RenderedScene:
    return scene_synth.render_views(scene_synth.fixture("crease", 96, 72))
