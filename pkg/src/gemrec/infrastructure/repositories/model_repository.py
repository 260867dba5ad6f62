"""File-based scorer model repository."""

import json
from pathlib import Path
from typing import Any

from gemrec.domain.exceptions import ArtifactError
from gemrec.domain.models import MODEL_FORMAT
from gemrec.domain.repositories import IModelRepository
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)


class FileModelRepository(IModelRepository):
    """Stores scorer documents as deterministic JSON files."""

    def __init__(self, model_dir: Path) -> None:
        """
        Initialize repository.

        Args:
            model_dir: Directory holding model files
        """
        self.model_dir = model_dir

    def _path(self, name: str) -> Path:
        return self.model_dir / f"{name}.json"

    def save_model(self, document: dict[str, Any], name: str = "model") -> None:
        path = self._path(name)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(document, f, sort_keys=True, separators=(",", ":"))
                f.write("\n")
            logger.info("Saved model", path=str(path), contexts=len(document.get("tables", [])))
        except (IOError, OSError) as e:
            logger.error("Failed to write model", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to write model {path}: {e}", path=str(path)) from e

    def load_model(self, name: str = "model") -> dict[str, Any]:
        path = self._path(name)
        if not path.exists():
            raise ArtifactError(
                f"Missing model {path}",
                path=str(path),
                advice="Run `gemrec train` with the same --out first",
            )
        try:
            with open(path, encoding="utf-8") as f:
                document = json.load(f)
        except (IOError, OSError) as e:
            logger.error("Failed to read model", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to read model {path}: {e}", path=str(path)) from e
        except json.JSONDecodeError as e:
            raise ArtifactError(f"Model file is not valid JSON: {e}", path=str(path)) from e

        if not isinstance(document, dict) or document.get("format") != MODEL_FORMAT:
            raise ArtifactError(
                "Model file has an unexpected header",
                path=str(path),
                expected=MODEL_FORMAT,
            )
        return document

    def model_exists(self, name: str = "model") -> bool:
        return self._path(name).exists()
