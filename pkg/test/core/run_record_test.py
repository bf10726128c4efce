import numpy as np
import pytest

from mvs_core import api, file_naming, run_record
from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.scene_io import DepthNormalResult

logger = root_cfg.setup_logger("mvs_core")


def _result(view_id: int, depth: float) -> DepthNormalResult:
    shape = (4, 6)
    d = np.full(shape, depth, dtype=np.float32)
    d[0, 0] = 0.0
    normal = np.zeros(shape + (3,), dtype=np.float32)
    normal[..., 2] = -1.0
    reliable = np.zeros(shape, dtype=bool)
    reliable[:2] = True
    return DepthNormalResult(d, normal, np.full(shape, 0.5, dtype=np.float32), reliable, view_id)


class Test_run_record:
    @pytest.mark.quick
    def test_save_and_load(self, tmp_path) -> None:
        cfg = MvsCfg(interval_mode=api.INTERVAL_MODE.FORMULA, seed=11)
        results = {2: _result(2, 3.0), 0: _result(0, 4.0)}
        path = run_record.save_run_record(tmp_path / "out", cfg, "scenes/planar3", results)
        assert path == tmp_path / "out" / file_naming.RUN_RECORD_FILE

        record = run_record.load_run_record(path)
        assert record["version"] == run_record.RECORD_VERSION
        assert record["scene"] == "scenes/planar3"
        assert record["timestamp"].endswith("+00:00")
        assert record["config"]["interval_mode"] == "formula"
        assert record["config"]["seed"] == 11
        assert set(record["config"]) == set(root_cfg.valid_keys())

        assert [v["view"] for v in record["views"]] == [0, 2]
        summary = record["views"][0]
        assert (summary["width"], summary["height"]) == (6, 4)
        assert summary["mean_cost"] == pytest.approx(0.5)
        assert summary["reliable_frac"] == pytest.approx(0.5)
        assert summary["median_depth"] == pytest.approx(4.0)
        assert summary["degenerate"] is False

    @pytest.mark.quick
    def test_default_enum_is_plain_string(self, tmp_path) -> None:
        path = run_record.save_run_record(tmp_path, MvsCfg(), tmp_path, {})
        text = path.read_text()
        assert "interval_mode: order_statistic" in text
        assert "!!python" not in text
        assert run_record.load_run_record(path)["views"] == []

    @pytest.mark.quick
    def test_package_version(self) -> None:
        assert isinstance(run_record.package_version(), str)
        assert run_record.package_version()
