import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Optional

import psutil
from dotenv import dotenv_values
from pydantic import ValidationError

from mvs_core import api
from mvs_core.config_objects import MvsCfg
from mvs_core.errors import ConfigError

############################################################################################
#
# Working directory structure
#
# MVS_CORE_HOME overrides the default location under the system temp directory.
############################################################################################
ROOT_WORKING_DIR: Path = Path(os.environ.get("MVS_CORE_HOME", Path(tempfile.gettempdir()) / "mvs_core"))
TMP_DIR: Path = ROOT_WORKING_DIR / "tmp"
LOG_DIR: Path = ROOT_WORKING_DIR / "logs"
CODE_DIR: Path = Path(__file__).parent.parent.parent
DOCS_DIR: Path = CODE_DIR / "docs"

for d in [TMP_DIR, LOG_DIR]:
    if not d.exists():
        d.mkdir(parents=True, exist_ok=True)

############################################################################################################
# Set up logging
#
# The logging level is the minimum of:
#  - the level requested by any calling module (default is INFO)
#  - MvsCfg.log_level once a configuration has been loaded
############################################################################################################
TEST_LOG = LOG_DIR.joinpath("test.log")
_DEFAULT_LOG: Optional[Path] = None
_LOG_LEVEL = logging.INFO


def set_log_level(level: int) -> None:
    global _LOG_LEVEL
    _LOG_LEVEL = min(level, _LOG_LEVEL)
    module_logger = logging.getLogger("mvs_core")
    module_logger.setLevel(_LOG_LEVEL)
    for handler in module_logger.handlers:
        handler.setLevel(_LOG_LEVEL)
    module_logger.debug("Debug logging enabled for mvs_core")


def setup_logger(name: str,
                 level: Optional[int] = None,
                 filename: Optional[str | Path] = None) -> logging.Logger:
    global _DEFAULT_LOG
    if level is not None:
        set_log_level(level)

    logger = logging.getLogger(name)
    logger.setLevel(_LOG_LEVEL)
    formatter = logging.Formatter(
        "%(asctime)-15s %(name)-6s %(levelname)-6s [%(thread)d] %(message)s"
    )

    file_handler_count = 0
    for handler in logger.handlers:
        if isinstance(handler, logging.FileHandler):
            file_handler_count += 1
        elif isinstance(handler, logging.StreamHandler):
            handler.setLevel(_LOG_LEVEL)

    # One console handler per logger
    if len(logger.handlers) == 0:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(_LOG_LEVEL)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if filename is None:
        if _DEFAULT_LOG is None:
            _DEFAULT_LOG = LOG_DIR.joinpath("default_" + api.utc_to_fname_str() + ".log")
        if not _DEFAULT_LOG.parent.exists():
            _DEFAULT_LOG.parent.mkdir(parents=True, exist_ok=True)
        if file_handler_count == 0:
            handler = logging.FileHandler(_DEFAULT_LOG)
            handler.setLevel(_LOG_LEVEL)
            handler.setFormatter(formatter)
            logger.addHandler(handler)
    # Limit to 2 file loggers
    elif file_handler_count <= 1:
        handler = logging.FileHandler(filename)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    logging.getLogger("PIL").setLevel(logging.WARNING)
    return logger


logger = setup_logger("mvs_core")


############################################################################################
# Effective configuration
#
# Precedence, lowest first: MvsCfg defaults < DVP_<KEY> environment < config file < overrides.
############################################################################################
def valid_keys() -> list[str]:
    return sorted(MvsCfg.model_fields.keys())


def read_cfg_file(path: Path | str) -> dict[str, str]:
    """Read a flat key=value config file. Keys are case-insensitive; unknown keys are rejected."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} does not exist")
    raw = dotenv_values(path)
    values: dict[str, str] = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"Config file {path}: key '{key}' has no value")
        values[key.strip().lower()] = value
    _check_keys(values.keys(), f"config file {path}")
    return values


def _check_keys(keys: Any, source: str) -> None:
    known = set(MvsCfg.model_fields.keys())
    unknown = sorted(k for k in keys if k not in known)
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in {source}", valid_keys())


def load_mvs_cfg(path: Optional[Path | str] = None,
                 overrides: Optional[dict[str, Any]] = None) -> MvsCfg:
    """Build the effective configuration.

    Args:
        path: Optional key=value config file.
        overrides: Values set on the command line; None values are ignored.

    Raises:
        ConfigError: On unknown keys or values that fail validation.
    """
    values: dict[str, Any] = {}
    if path is not None:
        values.update(read_cfg_file(path))
    if overrides:
        cleaned = {k.lower(): v for k, v in overrides.items() if v is not None}
        _check_keys(cleaned.keys(), "overrides")
        values.update(cleaned)
    try:
        cfg = MvsCfg(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
    set_log_level(cfg.log_level)
    logger.debug(f"Loaded configuration from {path} with {len(values)} explicit values")
    return cfg


def dump_mvs_cfg(cfg: MvsCfg) -> str:
    """Render the effective configuration as sorted key=value lines."""
    lines = []
    for key, value in sorted(cfg.model_dump().items()):
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, api.INTERVAL_MODE):
            value = value.value
        lines.append(f"{key}={value}")
    return "\n".join(lines)


def resolve_threads(cfg: MvsCfg) -> int:
    """Worker count; threads=0 means every logical core."""
    if cfg.threads > 0:
        return cfg.threads
    return psutil.cpu_count(logical=True) or 1
