"""CSV/TSV/JSON report writer."""

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import pandas as pd

from gemrec.domain.exceptions import ArtifactError
from gemrec.domain.repositories import IReportRepository
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

UNDEFINED = "NA"


class FileReportRepository(IReportRepository):
    """Writes metrics tables, plot series and audit reports into one directory."""

    def __init__(self, report_dir: Path) -> None:
        """
        Initialize repository.

        Args:
            report_dir: Output directory
        """
        self.report_dir = report_dir

    def _prepare(self, filename: str) -> Path:
        path = self.report_dir / filename
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"Cannot create report directory: {e}", path=str(path)) from e
        return path

    def write_table(
        self, name: str, rows: Sequence[dict[str, Any]], columns: Sequence[str]
    ) -> None:
        path = self._prepare(f"{name}.csv")
        frame = pd.DataFrame(list(rows), columns=list(columns))
        try:
            frame.to_csv(path, index=False, na_rep=UNDEFINED, lineterminator="\n")
        except OSError as e:
            logger.error("Failed to write table", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to write {path}: {e}", path=str(path)) from e
        logger.info("Wrote table", path=str(path), rows=len(frame))

    def write_series(
        self, name: str, points: Sequence[tuple[float, float]], header: tuple[str, str]
    ) -> None:
        path = self._prepare(f"{name}.tsv")
        frame = pd.DataFrame(list(points), columns=list(header))
        try:
            frame.to_csv(path, sep="\t", index=False, na_rep=UNDEFINED, lineterminator="\n")
        except OSError as e:
            logger.error("Failed to write series", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to write {path}: {e}", path=str(path)) from e
        logger.debug("Wrote series", path=str(path), points=len(frame))

    def write_json(self, name: str, document: dict[str, Any]) -> None:
        path = self._prepare(f"{name}.json")
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(document, f, sort_keys=True, indent=2)
                f.write("\n")
        except (IOError, OSError) as e:
            logger.error("Failed to write JSON report", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to write {path}: {e}", path=str(path)) from e
        logger.info("Wrote JSON report", path=str(path))

    def read_table(self, name: str) -> pd.DataFrame:
        """
        Read back a CSV table written by write_table.

        Raises:
            ArtifactError: If the file is missing or unreadable
        """
        path = self.report_dir / f"{name}.csv"
        try:
            return pd.read_csv(path, na_values=[UNDEFINED], keep_default_na=False)
        except (OSError, pd.errors.ParserError) as e:
            raise ArtifactError(f"Failed to read {path}: {e}", path=str(path)) from e
