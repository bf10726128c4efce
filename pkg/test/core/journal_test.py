import os

import pandas as pd
import pytest

from mvs_core import api
from mvs_core import configuration as root_cfg
from mvs_core.utils.journal import Journal

logger = root_cfg.setup_logger("mvs_core")


class Test_journal:
    @pytest.mark.quick
    def test_journal_basics(self) -> None:
        test_file = root_cfg.TMP_DIR.joinpath("journal_test.csv")
        if test_file.exists():
            os.remove(test_file)
        test_input = {"view": 0, "pass": 1}

        # Not cached, so every add_row writes the file
        j = Journal(test_file, cached=False)
        j.add_row(test_input)
        assert j.get_data() == [test_input]
        assert test_file.exists()

        j.add_row(test_input)
        assert len(j.get_data()) == 2

        # Rows with different keys widen the table
        j.add_row({"pass": 2, "mean_cost": 0.5})
        j.add_rows([{"view": 1, "pass": 1}, {"view": 1, "reliable_frac": 0.9}])
        j.add_rows([])
        assert len(j.get_data()) == 5
        keys = set().union(*(d.keys() for d in j.get_data()))
        assert keys == {"view", "pass", "mean_cost", "reliable_frac"}

        # Re-load from disk
        j2 = Journal(test_file, cached=False)
        assert len(j2.get_data()) == 5
        assert list(j2.as_df(["pass", "view"]).columns) == ["pass", "view"]

        j.delete()
        assert not test_file.exists()
        assert j.get_data() == []

    @pytest.mark.quick
    def test_cached_journal_with_required_columns(self, tmp_path) -> None:
        test_file = tmp_path / "progress.csv"
        j = Journal(test_file, reqd_columns=api.PROGRESS_FIELDS)
        j.add_row({"view": 3, "pass": 1, "mean_cost": 0.25})
        assert not test_file.exists()
        j.save()

        df = pd.read_csv(test_file)
        assert list(df.columns) == api.PROGRESS_FIELDS
        assert df.loc[0, "view"] == 3
        assert pd.isna(df.loc[0, "timestamp"])

    @pytest.mark.quick
    def test_in_memory_journal_needs_a_name(self, tmp_path) -> None:
        j = Journal()
        j.add_row({"a": 1})
        with pytest.raises(ValueError):
            j.save()
        assert j.save(tmp_path / "named.csv").exists()
