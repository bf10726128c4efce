import pytest

from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg

logger = root_cfg.setup_logger("mvs_core")

PARAMETERS_DOC = root_cfg.DOCS_DIR / "parameters.md"


def _defaults_block(text: str) -> str:
    section = text.split("## Defaults", 1)[1]
    return section.split("```text\n", 1)[1].split("\n```", 1)[0]


class Test_docs:
    @pytest.mark.quick
    def test_every_key_is_documented(self) -> None:
        text = PARAMETERS_DOC.read_text()
        missing = [k for k in root_cfg.valid_keys() if f"`{k}`" not in text]
        assert missing == []

    @pytest.mark.quick
    def test_default_transcript_matches_dump(self) -> None:
        assert _defaults_block(PARAMETERS_DOC.read_text()) == root_cfg.dump_mvs_cfg(MvsCfg())
