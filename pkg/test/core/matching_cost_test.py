import numpy as np
import pytest

from mvs_core import api, scene_synth
from mvs_core import configuration as root_cfg
from mvs_core.geometry import PlaneHypothesis, orient_to_camera, pixel_rays, plane_dist
from mvs_core.matching_cost import (
    CostEvaluator,
    CostParams,
    PatchSpec,
    deformable_cost,
    deformable_view_costs,
    highlight_cost,
    highlight_view_costs,
    multi_view_cost,
    ncc_cost,
    patch_costs,
)

logger = root_cfg.setup_logger("mvs_core")


def _textured(shape: tuple[int, int], seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.1, 0.9, size=shape)


def _rectified_pair(width: int = 96, height: int = 72) -> scene_synth.RenderedScene:
    """Two parallel cameras 0.4 apart facing a fronto-parallel plane at depth 5."""
    period = 4.0 * 5.0 / (0.9 * width)
    spec = scene_synth.SceneSpec(
        "rectified",
        planes=[scene_synth.PlaneSpec((0.0, 0.0, 5.0), (0.0, 0.0, -1.0), api.TEXTURE.NOISE, 0.5,
                                      period=period, seed=11)],
        cameras=[scene_synth.CameraSpec((0.0, 0.0, 0.0), (0.0, 0.0, 5.0)),
                 scene_synth.CameraSpec((0.4, 0.0, 0.0), (0.4, 0.0, 5.0))],
        width=width, height=height)
    return scene_synth.render_views(spec)


class Test_matching_cost:
    @pytest.mark.quick
    def test_identical_views_cost_zero(self, make_view) -> None:
        view = make_view(0, (0.0, 0.0, 0.0), image=_textured((48, 64)))
        spec = PatchSpec(7, 2)
        rng = np.random.default_rng(1)
        for _ in range(10):
            p = rng.integers([8, 8], [56, 40]).astype(np.float64)
            ray = pixel_rays(view.K, p)
            n = orient_to_camera(rng.normal(size=3), ray)
            n /= np.linalg.norm(n)
            if abs(np.dot(n, ray / np.linalg.norm(ray))) < 0.2:
                continue
            cost = ncc_cost(p, PlaneHypothesis(n, float(rng.uniform(2, 8))), spec, view, view)
            assert cost == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.quick
    def test_negated_image_cost_two(self, make_view) -> None:
        image = _textured((48, 64), seed=2)
        ref = make_view(0, (0.0, 0.0, 0.0), image=image)
        neg = make_view(1, (0.0, 0.0, 0.0), image=1.0 - image)
        h = PlaneHypothesis(np.array([0.0, 0.0, -1.0]), 5.0)
        assert ncc_cost(np.array([32.0, 24.0]), h, PatchSpec(7, 2), ref, neg) == pytest.approx(2.0, abs=1e-9)

    @pytest.mark.quick
    def test_textureless_patch_is_max_cost(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0))
        src = make_view(1, (0.3, 0.0, 0.0))
        h = PlaneHypothesis(np.array([0.0, 0.0, -1.0]), 5.0)
        assert ncc_cost(np.array([32.0, 24.0]), h, PatchSpec(), ref, src) == api.MAX_COST

    @pytest.mark.quick
    def test_costs_stay_in_range(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0), image=_textured((48, 64), seed=3))
        src = make_view(1, (0.5, -0.2, 0.0), image=_textured((48, 64), seed=4))
        rng = np.random.default_rng(5)
        n = 400
        centers = rng.integers([0, 0], [64, 48], size=(n, 2))
        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        depths = rng.uniform(0.5, 20.0, size=n)
        dists = plane_dist(normals, depths, centers.astype(np.float64), ref.K)
        costs = patch_costs(ref.image, src.image, ref, src, centers, normals, dists, PatchSpec())
        assert np.all(np.isfinite(costs))
        assert np.all((costs >= 0.0) & (costs <= api.MAX_COST))

    @pytest.mark.quick
    def test_ground_truth_wins_depth_sweep(self) -> None:
        rendered = _rectified_pair()
        (ref, _), (src, _) = rendered.views
        p = np.array([[48, 36]])
        depths = np.linspace(3.0, 8.0, 256)
        normals = np.tile([0.0, 0.0, -1.0], (len(depths), 1))
        centers = np.repeat(p, len(depths), axis=0)
        dists = plane_dist(normals, depths, centers.astype(np.float64), ref.K)
        sweep = patch_costs(ref.image, src.image, ref, src, centers, normals, dists, PatchSpec(11, 2))

        gt = patch_costs(ref.image, src.image, ref, src, p, normals[:1],
                         plane_dist(normals[:1], np.array([5.0]), p.astype(np.float64), ref.K), PatchSpec(11, 2))
        far = np.abs(depths - 5.0) > 0.75
        assert gt[0] < 0.1
        assert gt[0] < sweep[far].min()

    @pytest.mark.quick
    def test_multi_view_cost(self) -> None:
        costs = np.array([[0.2, 1.0, 1.8]])
        assert multi_view_cost(costs, np.array([[0.0, 1.0, 0.0]]))[0] == pytest.approx(1.0)
        assert multi_view_cost(costs, np.array([[1.0, 1.0, 1.0]]))[0] == pytest.approx(1.0)
        assert multi_view_cost(costs, np.zeros((1, 3)))[0] == api.MAX_COST

        rng = np.random.default_rng(6)
        c = rng.uniform(0, 2, size=(20, 5))
        w = rng.uniform(0, 1, size=(20, 5))
        expected = [sum(w[i, j] * c[i, j] for j in range(5)) / sum(w[i]) for i in range(20)]
        np.testing.assert_allclose(multi_view_cost(c, w), expected, rtol=1e-12)

    @pytest.mark.quick
    def test_deformable_cost(self) -> None:
        center = np.array([0.8])
        anchors = np.array([[0.2, 0.4, 0.6, 2.0]])
        mask = np.array([[True, True, True, False]])
        lam = 0.25
        expected = lam * 0.8 + (1 - lam) * 0.4
        assert deformable_view_costs(center, anchors, mask, lam)[0] == pytest.approx(expected)
        # No anchors: the central patch alone
        assert deformable_view_costs(center, anchors, np.zeros_like(mask), lam)[0] == pytest.approx(0.8)
        # One anchor
        one = np.array([[False, True, False, False]])
        assert deformable_view_costs(center, anchors, one, lam)[0] == pytest.approx(lam * 0.8 + (1 - lam) * 0.4)

        weights = np.array([[1.0, 1.0]])
        two = deformable_cost(np.array([[0.8, 0.4]]), np.stack([anchors, anchors], axis=1),
                              np.stack([mask, mask], axis=1), lam, weights)
        assert two[0] == pytest.approx((expected + lam * 0.4 + (1 - lam) * 0.4) / 2)

    @pytest.mark.quick
    def test_deformable_cost_ignores_anchor_order(self) -> None:
        rng = np.random.default_rng(7)
        center = rng.uniform(0, 2, size=(50, 3))
        anchors = rng.uniform(0, 2, size=(50, 3, 8))
        mask = rng.random((50, 3, 8)) < 0.6
        base = deformable_view_costs(center, anchors, mask, 0.25)
        for _ in range(5):
            perm = rng.permutation(8)
            shuffled = deformable_view_costs(center, anchors[..., perm], mask[..., perm], 0.25)
            assert np.array_equal(base, shuffled)

    @pytest.mark.quick
    def test_highlight_cost(self) -> None:
        rng = np.random.default_rng(8)
        center = rng.uniform(0, 2, size=(30, 2))
        anchors = rng.uniform(0, 2, size=(30, 2, 8))
        mask = rng.random((30, 2, 8)) < 0.5
        mask[:, :, 0] = True
        np.testing.assert_allclose(highlight_view_costs(anchors, mask),
                                   deformable_view_costs(center, anchors, mask, 0.0))
        # No anchors means no evidence
        empty = np.zeros_like(mask)
        assert np.all(highlight_view_costs(anchors, empty) == api.MAX_COST)
        assert np.all(highlight_cost(anchors, empty, np.ones((30, 2))) == api.MAX_COST)

    @pytest.mark.quick
    def test_evaluator_masks_views(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0), image=_textured((48, 64), seed=9))
        sources = [make_view(1, (0.3, 0.0, 0.0), image=_textured((48, 64), seed=10)), ref]
        params = CostParams(PatchSpec(7, 2), PatchSpec(5, 1))
        evaluator = CostEvaluator(ref, sources, params)
        centers = np.array([[20, 20], [40, 30]])
        normals = np.tile([0.0, 0.0, -1.0], (2, 1))
        dists = plane_dist(normals, np.array([5.0, 5.0]), centers.astype(np.float64), ref.K)
        views = np.array([[False, True], [True, False]])
        costs = evaluator.view_costs(centers, normals, dists, views=views)
        assert costs.shape == (2, 2)
        assert costs[0, 0] == api.MAX_COST and costs[1, 1] == api.MAX_COST
        # The reference against itself
        assert costs[0, 1] == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.quick
    def test_patch_spec_validation(self) -> None:
        assert PatchSpec(3, 2).offsets().tolist() == [[-2, -2], [0, -2], [2, -2], [-2, 0], [0, 0], [2, 0],
                                                      [-2, 2], [0, 2], [2, 2]]
        with pytest.raises(ValueError):
            PatchSpec(4, 1)
        with pytest.raises(ValueError):
            PatchSpec(5, 0)
