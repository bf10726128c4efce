import json

import cv2
import numpy as np
import pytest

from mvs_core import api, edge_prior, scene_synth
from mvs_core import configuration as root_cfg
from mvs_core.edge_prior import AtlasContext, AtlasParams, PlaneFit, RegionAtlas
from mvs_core.errors import GeometryError
from mvs_core.geometry import pixel_rays
from mvs_core.scene_io import CameraView, PriorBundle

logger = root_cfg.setup_logger("mvs_core")

W, H = 64, 48
F = 100.0


def _view() -> CameraView:
    K = np.array([[F, 0.0, (W - 1) / 2.0], [0.0, F, (H - 1) / 2.0], [0.0, 0.0, 1.0]])
    return CameraView(0, K, np.eye(3), np.zeros(3), W, H, np.zeros((H, W)))


def _roof_priors(view: CameraView) -> PriorBundle:
    """Two planes meeting at 90 degrees along the image's vertical center line, no edges."""
    ys, xs = np.mgrid[0:H, 0:W]
    rays = pixel_rays(view.K, np.stack([xs, ys], axis=-1))
    # z = 3 + |X|, so depth = 3 / (1 - |ray_x|)
    depth = 3.0 / (1.0 - np.abs(rays[..., 0]))
    sign = np.sign(rays[..., 0])[..., None]
    normal = np.concatenate([sign, np.zeros((H, W, 1)), -np.ones((H, W, 1))], axis=-1) / np.sqrt(2.0)
    return PriorBundle(depth, normal, np.zeros((H, W), dtype=bool))


def _flat_priors(edge_column: int | None = None) -> PriorBundle:
    normal = np.zeros((H, W, 3))
    normal[..., 2] = -1.0
    edges = np.zeros((H, W), dtype=bool)
    if edge_column is not None:
        edges[:, edge_column] = True
    return PriorBundle(np.full((H, W), 4.0), normal, edges)


class Test_edge_prior:
    @pytest.mark.quick
    def test_roberts_edges(self) -> None:
        assert not edge_prior.roberts_edges(np.full((H, W), 0.4)).any()

        step = np.full((H, W), 0.2)
        step[:, 32:] = 0.8
        edges = edge_prior.roberts_edges(step)
        assert edges[:, 31].all()
        assert edges.sum() == H

    @pytest.mark.quick
    def test_edge_recall_on_render(self) -> None:
        spec = scene_synth.SceneSpec(
            "two_planes",
            planes=[scene_synth.PlaneSpec((0.0, 0.0, 6.0), (0.0, 0.0, -1.0), api.TEXTURE.CONSTANT, 0.2),
                    scene_synth.PlaneSpec((0.0, 0.0, 4.0), (0.0, 0.0, -1.0), api.TEXTURE.CONSTANT, 0.8,
                                          extent=0.8)],
            cameras=[scene_synth.CameraSpec((0.0, 0.0, 0.0), (0.0, 0.0, 5.0))],
            width=W, height=H)
        rendered = scene_synth.render_views(spec)
        view, _ = rendered.views[0]
        gt = rendered.gt_edges[0]
        assert gt.any()
        found = cv2.dilate(edge_prior.roberts_edges(view.image).astype(np.uint8), np.ones((3, 3), np.uint8)) > 0
        assert found[gt].mean() >= 0.9

    @pytest.mark.quick
    def test_label_regions(self) -> None:
        assert edge_prior.label_regions(np.zeros((H, W), dtype=bool)).max() == 1
        assert edge_prior.label_regions(np.ones((H, W), dtype=bool)).max() == 0

        # 3 x 4 grid of cells separated by one-pixel edge lines
        grid = np.zeros((H, W), dtype=bool)
        grid[[15, 31], :] = True
        grid[:, [15, 31, 47]] = True
        labels = edge_prior.label_regions(grid)
        assert labels.max() == 12
        assert np.all(labels[grid] == 0)

    @pytest.mark.quick
    def test_fit_plane(self) -> None:
        rng = np.random.default_rng(0)
        xy = rng.uniform(-1, 1, size=(500, 2))
        points = np.column_stack([xy, 4.0 + 0.3 * xy[:, 0] - 0.2 * xy[:, 1]])
        fit = edge_prior.fit_plane(points, rng)
        assert fit.inlier_ratio == pytest.approx(1.0)
        assert fit.offset > 0
        assert np.linalg.norm(fit.normal) == pytest.approx(1.0)
        assert fit.distance(points).max() < 1e-9

        with pytest.raises(GeometryError):
            edge_prior.fit_plane(points[:2], rng)

    @pytest.mark.quick
    def test_fit_two_parallel_planes(self) -> None:
        rng = np.random.default_rng(1)
        xy = rng.uniform(-1, 1, size=(1000, 2))
        z = np.where(np.arange(1000) < 500, 4.0, 5.0)
        fit = edge_prior.fit_plane(np.column_stack([xy, z]), rng)
        assert fit.inlier_ratio == pytest.approx(0.5, abs=0.05)

    @pytest.mark.quick
    def test_ransac_plane_on_mono_depth(self) -> None:
        view = _view()
        priors = _flat_priors()
        ys, xs = np.mgrid[0:10, 0:10]
        fit = edge_prior.ransac_plane(np.stack([xs.ravel(), ys.ravel()], axis=-1), priors.mono_depth, view.K)
        np.testing.assert_allclose(np.abs(fit.normal), [0.0, 0.0, 1.0], atol=1e-9)
        assert fit.offset == pytest.approx(4.0)

    @pytest.mark.quick
    def test_plane_similarity(self) -> None:
        a = PlaneFit(np.array([0.0, 0.0, 1.0]), 2.0, 1.0)
        b = PlaneFit(np.array([1.0, 0.0, 0.0]), 2.5, 1.0)
        assert edge_prior.plane_similarity(a, a) == pytest.approx(1.0)
        assert edge_prior.plane_similarity(a, b) == pytest.approx(-0.5)
        far = PlaneFit(np.array([0.0, 0.0, 1.0]), 10.0, 1.0)
        assert edge_prior.plane_similarity(a, far) == pytest.approx(0.0)

    @pytest.mark.quick
    def test_normal_similarity(self) -> None:
        priors = _roof_priors(_view())
        phi = edge_prior.normal_similarity_map(priors.mono_normal, 3)
        assert phi[:, 31].max() == pytest.approx(0.0, abs=1e-12)
        assert phi[:, 10].min() == pytest.approx(1.0)
        assert edge_prior.normal_similarity((31, 20), priors.mono_normal, 3) == pytest.approx(phi[20, 31])
        assert edge_prior.normal_similarity((10, 20), priors.mono_normal, 3) == pytest.approx(1.0)

    @pytest.mark.quick
    def test_erosion_splits_crease(self) -> None:
        view = _view()
        priors = _roof_priors(view)
        params = AtlasParams()
        ctx = AtlasContext.from_priors(view, priors, params)
        atlas = RegionAtlas(edge_prior.label_regions(priors.edge_map))
        edge_prior.refit_all(atlas, ctx, params)
        assert len(atlas.regions) == 1

        split = edge_prior.try_erode_split(1, atlas, ctx, params)
        assert split is not None
        assert split.fit_i.inlier_ratio == pytest.approx(1.0)
        assert split.fit_j.inlier_ratio == pytest.approx(1.0)
        left = np.zeros((H, W), dtype=bool)
        left[:, :32] = True
        for mask in (split.mask_i, split.mask_j):
            agreement = max((mask == left).mean(), (mask == ~left).mean())
            assert agreement >= 0.95

        # Without the normal-based seeds the region stays whole
        assert edge_prior.try_erode_split(1, atlas, ctx, AtlasParams(use_normal_prior=False)) is None

    @pytest.mark.quick
    def test_build_atlas_crease_and_fixpoint(self) -> None:
        view = _view()
        priors = _roof_priors(view)
        params = AtlasParams()
        atlas = edge_prior.build_atlas(view, priors, params)
        assert sorted(atlas.regions) == [1, 2]

        gt = np.where(np.arange(W) < 32, 1, 2)[None, :].repeat(H, axis=0)
        same = (atlas.labels == gt).mean()
        assert max(same, (atlas.labels == 3 - gt).mean()) >= 0.95
        for record in atlas.regions.values():
            assert record.plane is not None
            assert 0.0 <= record.plane.inlier_ratio <= 1.0

        assert edge_prior.refine_atlas(atlas, view, priors, params) == 0

    @pytest.mark.quick
    def test_dilation_merges_texture_split(self) -> None:
        view = _view()
        priors = _flat_priors(edge_column=32)
        atlas = edge_prior.build_atlas(view, priors, AtlasParams())
        assert len(atlas.regions) == 1
        assert np.all(atlas.labels == 1)

    @pytest.mark.quick
    def test_pixel_filter_without_erosion_dilation(self) -> None:
        view = _view()
        priors = _flat_priors(edge_column=32)
        params = AtlasParams(use_erosion_dilation=False)
        atlas = edge_prior.build_atlas(view, priors, params)
        assert len(atlas.regions) == 2
        # The edge column was absorbed by one of its neighbours
        assert np.all(atlas.labels > 0)

        ctx = AtlasContext.from_priors(view, priors, params)
        atlas.labels[5, 32] = 0
        label = int(atlas.labels[5, 31])
        assert edge_prior.pixel_filter((32, 5), label, atlas, ctx, params) == label
        assert edge_prior.pixel_filter((32, 5), 99, atlas, ctx, params) == 0

        unfiltered = edge_prior.build_atlas(view, priors, AtlasParams(use_erosion_dilation=False,
                                                                      use_pixel_filter=False))
        assert np.all(unfiltered.labels[:, 32] == 0)

    @pytest.mark.quick
    def test_small_regions_stay_unplanarized(self) -> None:
        view = _view()
        priors = _flat_priors(edge_column=5)
        atlas = edge_prior.build_atlas(view, priors, AtlasParams(use_erosion_dilation=False, use_pixel_filter=False))
        small = [r for r in atlas.regions.values() if r.pixel_count < 300]
        assert len(small) == 1
        assert small[0].plane is None

    @pytest.mark.quick
    def test_adjacent_pairs(self) -> None:
        labels = np.zeros((5, 7), dtype=np.int32)
        labels[:, :3] = 1
        labels[:, 4:] = 2
        assert edge_prior.adjacent_pairs(labels) == [(1, 2)]
        labels[:, 4:] = 0
        labels[:, 6] = 3
        assert edge_prior.adjacent_pairs(labels) == []

    @pytest.mark.quick
    def test_dump_atlas(self, tmp_path) -> None:
        view = _view()
        atlas = edge_prior.build_atlas(view, _roof_priors(view), AtlasParams())
        label_file, regions_file = edge_prior.dump_atlas(atlas, tmp_path, 0)
        labels = cv2.imread(str(label_file), cv2.IMREAD_UNCHANGED)
        assert np.array_equal(labels, atlas.labels)
        regions = json.loads(regions_file.read_text())
        assert set(regions["regions"]) == {"1", "2"}
