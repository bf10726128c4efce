####################################################################################################
# Exception hierarchy for MVS Core.
#
# Everything raised deliberately by the package derives from MvsError so that the CLI can map it
# onto an exit code. Input problems also derive from ValueError.
####################################################################################################
from pathlib import Path
from typing import Optional


class MvsError(Exception):
    """Base class for all MVS Core errors."""


class SceneParseError(MvsError, ValueError):
    """A scene file could not be parsed."""

    def __init__(self, path: Path | str, line_no: int, message: str) -> None:
        self.path = Path(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class SceneValidationError(MvsError, ValueError):
    """A loaded scene violates one or more scene rules."""

    def __init__(self, failures: list[str]) -> None:
        self.failures = failures
        super().__init__("Scene validation failed:\n  " + "\n  ".join(failures))


class ConfigError(MvsError, ValueError):
    """Invalid configuration key or value."""

    def __init__(self, message: str, valid_keys: Optional[list[str]] = None) -> None:
        self.valid_keys = valid_keys or []
        if valid_keys:
            message = f"{message}. Valid keys are: {', '.join(sorted(valid_keys))}"
        super().__init__(message)


class GeometryError(MvsError, ValueError):
    """A geometric quantity is undefined (coincident centers, underdetermined fits)."""


class MapFormatError(MvsError, ValueError):
    """A PFM, PNG or PLY artifact is malformed or cannot represent the data."""
