import numpy as np
import pytest

from mvs_core import config_validator, file_naming, scene_io
from mvs_core import configuration as root_cfg
from mvs_core.errors import MapFormatError, SceneParseError, SceneValidationError
from mvs_core.scene_io import DepthNormalResult

logger = root_cfg.setup_logger("mvs_core")


class Test_pfm:
    @pytest.mark.quick
    def test_round_trip(self, tmp_path) -> None:
        rng = np.random.default_rng(0)
        depth = rng.uniform(0, 10, size=(7, 5)).astype(np.float32)
        normal = rng.normal(size=(7, 5, 3)).astype(np.float32)
        scene_io.write_pfm(tmp_path / "d.pfm", depth)
        scene_io.write_pfm(tmp_path / "n.pfm", normal)
        assert np.array_equal(scene_io.read_pfm(tmp_path / "d.pfm"), depth)
        assert np.array_equal(scene_io.read_pfm(tmp_path / "n.pfm"), normal)
        # Little-endian, bottom row first
        raw = (tmp_path / "d.pfm").read_bytes()
        assert raw.startswith(b"Pf\n5 7\n-1.0\n")
        assert np.frombuffer(raw[len(b"Pf\n5 7\n-1.0\n"):], dtype="<f4")[:5].tolist() == depth[-1].tolist()

    @pytest.mark.quick
    def test_big_endian(self, tmp_path) -> None:
        data = np.arange(6, dtype=np.float32).reshape(2, 3)
        (tmp_path / "be.pfm").write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(data).astype(">f4").tobytes())
        assert np.array_equal(scene_io.read_pfm(tmp_path / "be.pfm"), data)

    @pytest.mark.quick
    def test_format_errors(self, tmp_path) -> None:
        with pytest.raises(MapFormatError):
            scene_io.write_pfm(tmp_path / "nan.pfm", np.array([[1.0, np.nan]]))
        assert not (tmp_path / "nan.pfm").exists()
        with pytest.raises(MapFormatError):
            scene_io.write_pfm(tmp_path / "bad.pfm", np.zeros((2, 2, 2)))

        (tmp_path / "hdr.pfm").write_bytes(b"P6\n1 1\n-1.0\n\x00\x00\x00\x00")
        with pytest.raises(MapFormatError):
            scene_io.read_pfm(tmp_path / "hdr.pfm")
        (tmp_path / "short.pfm").write_bytes(b"Pf\n2 2\n-1.0\n" + np.zeros(3, dtype="<f4").tobytes())
        with pytest.raises(MapFormatError):
            scene_io.read_pfm(tmp_path / "short.pfm")
        with pytest.raises(OSError):
            scene_io.read_pfm(tmp_path / "missing.pfm")

    @pytest.mark.quick
    def test_bad_scale_line(self, tmp_path) -> None:
        payload = np.zeros(4, dtype="<f4").tobytes()
        for scale in (b"abc", b"0", b"nan", b""):
            path = tmp_path / "scale.pfm"
            path.write_bytes(b"Pf\n2 2\n" + scale + b"\n" + payload)
            with pytest.raises(MapFormatError, match="scale"):
                scene_io.read_pfm(path)


class Test_point_cloud:
    @pytest.mark.quick
    def test_round_trip(self, tmp_path) -> None:
        rng = np.random.default_rng(1)
        pos = rng.normal(size=(50, 3)).astype(np.float32).astype(np.float64)
        normals = rng.normal(size=(50, 3)).astype(np.float32).astype(np.float64)
        colors = rng.integers(0, 256, size=(50, 3)).astype(np.uint8)
        scene_io.save_point_cloud(tmp_path / "c.ply", pos, normals, colors)
        p, n, c = scene_io.read_point_cloud(tmp_path / "c.ply")
        assert np.array_equal(p, pos) and np.array_equal(n, normals) and np.array_equal(c, colors)

        scene_io.save_point_cloud(tmp_path / "t.ply", pos, text=True)
        p, n, c = scene_io.read_point_cloud(tmp_path / "t.ply")
        np.testing.assert_allclose(p, pos, rtol=1e-6)
        assert n is None and c is None

    @pytest.mark.quick
    def test_empty_and_malformed(self, tmp_path) -> None:
        scene_io.save_point_cloud(tmp_path / "e.ply", np.zeros((0, 3)))
        assert scene_io.read_point_cloud(tmp_path / "e.ply")[0].shape == (0, 3)
        (tmp_path / "bad.ply").write_text("not a ply file\n")
        with pytest.raises(MapFormatError):
            scene_io.read_point_cloud(tmp_path / "bad.ply")


class Test_scene:
    @pytest.mark.quick
    def test_round_trip(self, planar3_tiny, tmp_path) -> None:
        scene_io.save_scene(planar3_tiny.views, tmp_path)
        loaded = scene_io.load_scene(tmp_path)
        assert len(loaded) == len(planar3_tiny.views)
        for (view, priors), (orig, orig_priors) in zip(loaded, planar3_tiny.views):
            assert view.id == orig.id
            assert (view.width, view.height) == (orig.width, orig.height)
            np.testing.assert_allclose(view.K, orig.K)
            np.testing.assert_allclose(view.R, orig.R)
            np.testing.assert_allclose(view.T, orig.T)
            assert np.abs(view.image - orig.image).max() <= 0.5 / 255 + 1e-9
            np.testing.assert_allclose(priors.mono_depth, orig_priors.mono_depth, rtol=1e-6)
            assert np.array_equal(priors.edge_map, orig_priors.edge_map)
            assert not priors.highlight_mask.any()

    @pytest.mark.quick
    def test_missing_edges_are_computed(self, planar3_tiny, tmp_path) -> None:
        scene_io.save_scene(planar3_tiny.views[:2], tmp_path)
        file_naming.prior_edges_file(tmp_path, 1).unlink()
        (view, priors) = scene_io.load_scene(tmp_path)[1]
        from mvs_core.edge_prior import roberts_edges
        assert np.array_equal(priors.edge_map, roberts_edges(view.image))

    @pytest.mark.quick
    def test_camera_parse_errors(self, planar3_tiny, tmp_path) -> None:
        with pytest.raises(SceneParseError) as e:
            scene_io.load_scene(tmp_path)
        assert e.value.line_no == 0

        scene_io.save_scene(planar3_tiny.views[:2], tmp_path)
        cameras = file_naming.cameras_file(tmp_path)
        lines = cameras.read_text().splitlines()
        # Header comment is line 1, so the second camera sits on line 3
        lines[2] = lines[2].rsplit(" ", 2)[0]
        cameras.write_text("\n".join(lines) + "\n")
        with pytest.raises(SceneParseError) as e:
            scene_io.load_scene(tmp_path)
        assert e.value.line_no == 3
        assert "cameras.txt:3" in str(e.value)

        tokens = lines[1].split()
        tokens[1] = "abc"
        cameras.write_text(" ".join(tokens) + "\n")
        with pytest.raises(SceneParseError) as e:
            scene_io.load_scene(tmp_path)
        assert e.value.line_no == 1

        cameras.write_text("# nothing here\n\n")
        with pytest.raises(SceneParseError):
            scene_io.load_scene(tmp_path)

    @pytest.mark.quick
    def test_validation_errors(self, planar3_tiny, tmp_path) -> None:
        scene_io.save_scene(planar3_tiny.views[:2], tmp_path)
        depth = planar3_tiny.views[0][1].mono_depth.copy()
        depth[3, 3] = -1.0
        scene_io.write_pfm(file_naming.prior_depth_file(tmp_path, 0), depth)
        scene_io.write_pfm(file_naming.prior_normal_file(tmp_path, 1), np.ones((48, 64, 3)))
        with pytest.raises(SceneValidationError) as e:
            scene_io.load_scene(tmp_path)
        assert len(e.value.failures) == 2
        assert "View 0" in e.value.failures[0] and "mono_depth" in e.value.failures[0]
        assert "View 1" in e.value.failures[1] and "unit norm" in e.value.failures[1]

    @pytest.mark.quick
    def test_loaded_normals_face_camera(self, planar3_tiny, tmp_path) -> None:
        view, priors = planar3_tiny.views[0]
        gt = planar3_tiny.gt_normal[0]
        scene_io.save_scene([(view, priors)], tmp_path)
        scene_io.write_pfm(file_naming.prior_normal_file(tmp_path, 0), -gt)
        _, loaded = scene_io.load_scene(tmp_path)[0]
        np.testing.assert_allclose(loaded.mono_normal, gt, atol=1e-6)


class Test_config_validator:
    @pytest.mark.quick
    def test_valid_scene(self, planar3_tiny) -> None:
        assert config_validator.validate_scene(planar3_tiny.views) == (True, [])
        assert config_validator.validate_scene([])[0] is False

    @pytest.mark.quick
    def test_camera_rules(self, make_view, planar3_tiny) -> None:
        _, priors = planar3_tiny.views[0]
        view = make_view(0, (0.0, 0.0, 0.0))
        view.R = view.R * 1.1
        view.K[2, 2] = 2.0
        is_valid, failures = config_validator.validate_scene([(view, priors), (view, priors)])
        assert not is_valid
        assert failures[0] == "Duplicate view id 0."
        assert any("K[2][2]" in f for f in failures)
        assert any("orthonormal" in f for f in failures)

    @pytest.mark.quick
    def test_size_rules(self, make_view, planar3_tiny) -> None:
        _, priors = planar3_tiny.views[0]
        small = make_view(0, (0.0, 0.0, 0.0), width=16, height=16)
        is_valid, failures = config_validator.validate_scene([(small, priors)])
        assert not is_valid
        assert any("minimum" in f for f in failures)
        assert any("mono_depth" in f for f in failures)


class Test_results:
    @pytest.mark.quick
    def test_depth_normal_round_trip(self, tmp_path) -> None:
        rng = np.random.default_rng(2)
        result = DepthNormalResult(rng.uniform(1, 5, (6, 8)).astype(np.float32),
                                   rng.normal(size=(6, 8, 3)).astype(np.float32),
                                   rng.uniform(0, 2, (6, 8)).astype(np.float32),
                                   rng.random((6, 8)) < 0.5, view_id=4)
        scene_io.save_depth_normal(result, tmp_path)
        loaded = scene_io.load_depth_normal(tmp_path, 4)
        assert np.array_equal(loaded.depth, result.depth)
        assert np.array_equal(loaded.normal, result.normal)
        assert np.array_equal(loaded.cost, result.cost)
        assert np.array_equal(loaded.reliable, result.reliable)
        assert file_naming.result_view_ids(tmp_path) == [4]

    @pytest.mark.quick
    def test_bad_map_writes_nothing(self, tmp_path) -> None:
        normal = np.zeros((6, 8, 3), dtype=np.float32)
        normal[..., 2] = -1.0
        normal[2, 3] = np.nan
        result = DepthNormalResult(np.full((6, 8), 2.0, dtype=np.float32), normal,
                                   np.zeros((6, 8), dtype=np.float32), np.ones((6, 8), dtype=bool), view_id=1)
        with pytest.raises(MapFormatError):
            scene_io.save_depth_normal(result, tmp_path)
        assert not file_naming.result_depth_file(tmp_path, 1).exists()
        assert file_naming.result_view_ids(tmp_path) == []

        # A cost map of the wrong size is caught before anything is written too
        result.normal[2, 3] = (0.0, 0.0, -1.0)
        result.cost = np.zeros((5, 8), dtype=np.float32)
        with pytest.raises(MapFormatError):
            scene_io.save_depth_normal(result, tmp_path)
        assert not file_naming.result_depth_file(tmp_path, 1).exists()
