import pytest

from mvs_core import api
from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.errors import ConfigError

logger = root_cfg.setup_logger("mvs_core")


class Test_configuration:
    @pytest.mark.quick
    def test_defaults(self) -> None:
        cfg = root_cfg.load_mvs_cfg()
        assert cfg == MvsCfg()
        assert cfg.patch_size == 11 and cfg.patch_step == 5
        assert cfg.eta == 300 and cfg.lam == 0.25
        assert cfg.interval_mode == api.INTERVAL_MODE.ORDER_STATISTIC

    @pytest.mark.quick
    def test_file_and_overrides(self, tmp_path) -> None:
        path = tmp_path / "run.cfg"
        path.write_text("# solver settings\nOUTER_PASSES=5\nlam=0.5\nuse_area_max=false\n"
                        "interval_mode=formula\n")
        cfg = root_cfg.load_mvs_cfg(path)
        assert cfg.outer_passes == 5
        assert cfg.lam == 0.5
        assert cfg.use_area_max is False
        assert cfg.interval_mode == api.INTERVAL_MODE.FORMULA

        cfg = root_cfg.load_mvs_cfg(path, {"lam": "0.75", "seed": None})
        assert cfg.lam == 0.75
        assert cfg.seed == 0

    @pytest.mark.quick
    def test_environment(self, monkeypatch) -> None:
        monkeypatch.setenv("DVP_THREADS", "3")
        assert root_cfg.load_mvs_cfg().threads == 3
        assert root_cfg.load_mvs_cfg(overrides={"threads": 2}).threads == 2

    @pytest.mark.parametrize(
        "overrides",
        [
            {"no_such_key": 1},
            {"patch_size": 4},
            {"lam": 1.5},
            {"vs_tau_good": 1.3},
            {"depth_min": 5.0, "depth_max": 2.0},
        ],
    )
    @pytest.mark.quick
    def test_invalid_values(self, overrides: dict) -> None:
        with pytest.raises(ConfigError):
            root_cfg.load_mvs_cfg(overrides=overrides)

    @pytest.mark.quick
    def test_unknown_key_lists_valid_keys(self, tmp_path) -> None:
        path = tmp_path / "bad.cfg"
        path.write_text("etaa=10\n")
        with pytest.raises(ConfigError) as e:
            root_cfg.load_mvs_cfg(path)
        assert "etaa" in str(e.value)
        assert "eta" in e.value.valid_keys
        assert e.value.valid_keys == root_cfg.valid_keys()

        with pytest.raises(ConfigError):
            root_cfg.load_mvs_cfg(tmp_path / "missing.cfg")

    @pytest.mark.quick
    def test_dump(self) -> None:
        text = root_cfg.dump_mvs_cfg(MvsCfg(use_pixel_filter=False))
        lines = text.splitlines()
        assert lines == sorted(lines)
        assert [line.split("=", 1)[0] for line in lines] == root_cfg.valid_keys()
        assert "use_pixel_filter=false" in lines
        assert "use_area_max=true" in lines
        assert "interval_mode=order_statistic" in lines
        assert "patch_size=11" in lines

    @pytest.mark.quick
    def test_dump_reloads(self, tmp_path) -> None:
        cfg = MvsCfg(eta=120, mu=2, interval_mode=api.INTERVAL_MODE.FORMULA)
        path = tmp_path / "dumped.cfg"
        path.write_text(root_cfg.dump_mvs_cfg(cfg) + "\n")
        assert root_cfg.load_mvs_cfg(path) == cfg

    @pytest.mark.quick
    def test_resolve_threads(self) -> None:
        assert root_cfg.resolve_threads(MvsCfg(threads=4)) == 4
        assert root_cfg.resolve_threads(MvsCfg()) >= 1
