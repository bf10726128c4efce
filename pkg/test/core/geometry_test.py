import numpy as np
import pytest

from mvs_core import configuration as root_cfg
from mvs_core import geometry
from mvs_core.errors import GeometryError
from mvs_core.geometry import PlaneHypothesis

logger = root_cfg.setup_logger("mvs_core")


class Test_geometry:
    @pytest.mark.quick
    def test_back_project_inverts_project(self, make_view) -> None:
        view = make_view(0, (0.3, -0.2, 0.0))
        rng = np.random.default_rng(0)
        pixels = rng.uniform(0, [view.width - 1, view.height - 1], size=(50, 2))
        depths = rng.uniform(1.0, 10.0, size=50)
        X = geometry.back_project(pixels, depths, view)
        proj, z = geometry.project(X, view)
        np.testing.assert_allclose(proj, pixels, atol=1e-9)
        np.testing.assert_allclose(z, depths, rtol=1e-12)

    @pytest.mark.quick
    def test_camera_center_projects_to_zero_depth(self, make_view) -> None:
        view = make_view(0, (0.4, 0.1, -0.5))
        np.testing.assert_allclose(geometry.camera_center(view), [0.4, 0.1, -0.5], atol=1e-12)
        X_cam = view.R @ geometry.camera_center(view) + view.T
        np.testing.assert_allclose(X_cam, 0.0, atol=1e-12)

    @pytest.mark.quick
    def test_homography_maps_plane_points(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0))
        src = make_view(1, (0.5, 0.1, 0.0))
        p = np.array([30.0, 20.0])
        n = np.array([0.2, -0.1, -1.0])
        n /= np.linalg.norm(n)
        h = PlaneHypothesis(n, 4.0)
        H, degenerate = geometry.homography(h, p, ref, src)
        assert not degenerate

        # Every pixel whose ray meets the plane maps to the projection of that plane point
        X_p = geometry.pixel_rays(ref.K, p) * h.d
        for q in (p, np.array([10.0, 5.0]), np.array([55.0, 40.0])):
            dq = geometry.transfer_depth(n, X_p, q, ref.K)
            expected, _ = geometry.project(geometry.back_project(q, dq, ref), src)
            mapped, w = geometry.apply_homographies(H, q[None])
            assert w[0] > 0
            np.testing.assert_allclose(mapped[0], expected, atol=1e-8)

    @pytest.mark.quick
    def test_random_homography_oracle(self, make_view) -> None:
        rng = np.random.default_rng(11)
        checked, degenerate_count, max_err = 0, 0, 0.0
        while checked < 1000:
            ref = make_view(0, tuple(rng.uniform([-1.0, -1.0, -1.0], [1.0, 1.0, 0.5])),
                            tuple(rng.uniform([-0.5, -0.5, 4.0], [0.5, 0.5, 6.0])))
            src = make_view(1, tuple(rng.uniform([-1.0, -1.0, -1.0], [1.0, 1.0, 0.5])),
                            tuple(rng.uniform([-0.5, -0.5, 4.0], [0.5, 0.5, 6.0])))
            p, q = rng.uniform(0, [ref.width - 1, ref.height - 1], size=(2, 2))
            n = geometry.orient_to_camera(geometry.random_unit_vectors(rng, 1)[0], geometry.pixel_rays(ref.K, p))
            if np.dot(n, geometry.pixel_rays(ref.K, p)) > -0.3:
                continue
            h = PlaneHypothesis(n, rng.uniform(2.0, 10.0))
            X_p = geometry.pixel_rays(ref.K, p) * h.d
            dq = geometry.transfer_depth(n, X_p, q, ref.K)
            if not 0.5 < dq < 50.0:
                continue
            X = geometry.back_project(q, dq, ref)
            expected, z_src = geometry.project(X, src)
            if z_src < 0.5:
                continue

            H, degenerate = geometry.homography(h, p, ref, src)
            if degenerate:
                # Source center on or near the plane
                degenerate_count += 1
                continue
            mapped, _ = geometry.apply_homographies(H, q[None])
            # Unnormalised homographies keep w positive in front of both cameras
            H_dist = geometry.plane_homographies(n, geometry.plane_dist(n, h.d, p, ref.K), ref, src)
            mapped_dist, w = geometry.apply_homographies(H_dist, q[None])
            assert w[0] > 0
            np.testing.assert_allclose(mapped_dist, mapped, atol=1e-6)
            # The plane point round-trips through the reference camera
            back, z_ref = geometry.project(X, ref)
            max_err = max(max_err, float(np.abs(mapped[0] - expected).max()), float(np.abs(back - q).max()))
            assert z_ref == pytest.approx(dq, rel=1e-9)
            checked += 1
        assert max_err <= 1e-3
        assert degenerate_count < 50

    @pytest.mark.quick
    def test_homography_identity_for_same_view(self, make_view) -> None:
        view = make_view(0, (0.0, 0.0, 0.0))
        h = PlaneHypothesis(np.array([0.0, 0.0, -1.0]), 3.0)
        H, degenerate = geometry.homography(h, np.array([20.0, 20.0]), view, view)
        assert not degenerate
        np.testing.assert_allclose(H, np.eye(3), atol=1e-12)

    @pytest.mark.quick
    def test_plane_behind_camera_is_degenerate(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0))
        src = make_view(1, (0.5, 0.0, 0.0))
        # n.ray > 0 gives dist = -n.X_p < 0
        h = PlaneHypothesis(np.array([0.0, 0.0, 1.0]), 3.0)
        _, degenerate = geometry.homography(h, np.array([20.0, 20.0]), ref, src)
        assert degenerate
        assert bool(geometry.is_degenerate(np.zeros((3, 3))))

    @pytest.mark.quick
    def test_epipolar_line_contains_projections(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0))
        src = make_view(1, (0.6, 0.2, 0.0))
        p = np.array([25.0, 18.0])
        direction, point = geometry.epipolar_line(p, ref, src)
        assert np.linalg.norm(direction) == pytest.approx(1.0)

        depths = np.array([1.0, 2.0, 4.0, 8.0])
        proj, _ = geometry.project(geometry.back_project(np.repeat(p[None], 4, axis=0), depths, ref), src)
        rel = proj - point
        cross = rel[:, 0] * direction[1] - rel[:, 1] * direction[0]
        np.testing.assert_allclose(cross, 0.0, atol=1e-8)
        # Oriented toward increasing depth
        steps = np.diff(proj, axis=0) @ direction
        assert np.all(steps > 0)

    @pytest.mark.quick
    def test_epipolar_line_undefined_for_coincident_centers(self, make_view) -> None:
        a = make_view(0, (0.0, 0.0, 0.0))
        b = make_view(1, (0.0, 0.0, 0.0), target=(1.0, 0.0, 5.0))
        with pytest.raises(GeometryError):
            geometry.epipolar_line(np.array([10.0, 10.0]), a, b)

    @pytest.mark.quick
    def test_depth_from_source_pixel_recovers_depth(self, make_view) -> None:
        ref = make_view(0, (0.0, 0.0, 0.0))
        src = make_view(1, (-0.4, 0.0, 0.0))
        pixels = np.array([[5.0, 5.0], [32.0, 24.0], [60.0, 40.0]])
        depths = np.array([2.0, 5.0, 9.0])
        q, _ = geometry.project(geometry.back_project(pixels, depths, ref), src)
        np.testing.assert_allclose(geometry.depth_from_source_pixel(pixels, q, ref, src), depths, rtol=1e-9)

    @pytest.mark.quick
    def test_orient_to_camera(self) -> None:
        rays = np.array([[0.0, 0.0, 1.0], [0.1, 0.0, 1.0]])
        normals = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        oriented = geometry.orient_to_camera(normals, rays)
        assert np.all(np.sum(oriented * rays, axis=-1) <= 0)
        np.testing.assert_allclose(oriented[1], normals[1])

    @pytest.mark.quick
    def test_hypothesis_validity(self) -> None:
        ray = np.array([0.0, 0.0, 1.0])
        assert PlaneHypothesis(np.array([0.0, 0.0, -1.0]), 2.0).is_valid(ray, 1.0, 3.0)
        assert not PlaneHypothesis(np.array([0.0, 0.0, 1.0]), 2.0).is_valid(ray)
        assert not PlaneHypothesis(np.array([0.0, 0.0, -2.0]), 2.0).is_valid(ray)
        assert not PlaneHypothesis(np.array([0.0, 0.0, -1.0]), 5.0).is_valid(ray, 1.0, 3.0)
