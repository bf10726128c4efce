########################################################################################
# CSV journal of solver progress
#
# One row per view and outer pass. Rows are buffered as dicts and framed with pandas
# when read or written, so columns may differ between rows.
########################################################################################
from pathlib import Path
from typing import Iterable, Optional

import pandas as pd

from mvs_core import configuration as root_cfg

logger = root_cfg.setup_logger("mvs_core")


class Journal:
    """Row-oriented CSV log.

    A journal opened on an existing file starts with that file's rows. Relative paths resolve
    under root_cfg.TMP_DIR; a journal created without a path lives in memory until save() is
    given one.

    With `reqd_columns` the file always carries exactly those columns, in that order, and
    values a row does not provide are left empty. Unless `cached`, every add rewrites the file.
    """

    def __init__(self,
                 fname: Optional[Path | str] = None,
                 cached: bool = True,
                 reqd_columns: Optional[list[str]] = None) -> None:
        self.reqd_columns = list(reqd_columns) if reqd_columns is not None else None
        self._cached = cached
        self._rows: list[dict] = []
        self.fname: Optional[Path] = self._resolve(fname) if fname is not None else None
        if self.fname is not None and self.fname.exists():
            self.load()

    @staticmethod
    def _resolve(fname: Path | str) -> Path:
        path = Path(fname)
        return path if path.is_absolute() else root_cfg.TMP_DIR / path

    def load(self) -> pd.DataFrame:
        """Replace the buffered rows with the file's contents."""
        if self.fname is None or not self.fname.exists():
            self._rows = []
            return pd.DataFrame()
        try:
            df = pd.read_csv(self.fname)
        except pd.errors.EmptyDataError:
            df = pd.DataFrame()
        # Drop the NaN padding pandas adds for columns a row never had
        self._rows = [{k: v for k, v in rec.items() if not pd.isna(v)} for rec in df.to_dict(orient="records")]
        return df

    def add_row(self, row: dict) -> None:
        self.add_rows([row])

    def add_rows(self, rows: Iterable[dict]) -> None:
        rows = [dict(r) for r in rows]
        if not rows:
            return
        self._rows.extend(rows)
        if not self._cached:
            self.save()

    def get_data(self) -> list[dict]:
        return [dict(r) for r in self._rows]

    def as_df(self, column_order: Optional[list[str]] = None) -> pd.DataFrame:
        df = pd.DataFrame(self._rows)
        if column_order is None:
            return df
        return df.reindex(columns=column_order)

    def save(self, fname: Optional[Path | str] = None) -> Path:
        if fname is not None:
            self.fname = self._resolve(fname)
        if self.fname is None:
            raise ValueError("Journal has no file name; pass one to save()")

        df = self.as_df(self.reqd_columns)
        self.fname.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(self.fname, index=False)
        logger.debug(f"Wrote {len(df)} journal rows to {self.fname}")
        return self.fname

    def delete(self) -> None:
        """Forget all rows and remove the backing file."""
        self._rows = []
        if self.fname is not None:
            self.fname.unlink(missing_ok=True)
