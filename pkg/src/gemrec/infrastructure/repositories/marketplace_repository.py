"""JSON-lines implementation of the marketplace repository."""

import json
from collections.abc import Iterator, Sequence
from pathlib import Path
from typing import Any

from gemrec.domain.exceptions import ArtifactError
from gemrec.domain.models import Interaction, ItemEmbedding, Mode, SemanticId, Trajectory
from gemrec.domain.repositories import IMarketplaceRepository
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)


class JsonlMarketplaceRepository(IMarketplaceRepository):
    """Stores items, semantic IDs, bids and trajectories as JSON lines."""

    ITEMS_FILE = "items.jsonl"
    SEMANTIC_IDS_FILE = "semantic_ids.jsonl"
    TRAJECTORIES_FILE = "trajectories.jsonl"

    def __init__(self, data_dir: Path) -> None:
        """
        Initialize repository.

        Args:
            data_dir: Directory holding the marketplace files
        """
        self.data_dir = data_dir

    def _write(self, filename: str, records: Iterator[dict[str, Any]]) -> None:
        path = self.data_dir / filename
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            count = 0
            with open(path, "w", encoding="utf-8") as f:
                for record in records:
                    f.write(json.dumps(record, sort_keys=True) + "\n")
                    count += 1
            logger.info("Wrote artifact", path=str(path), records=count)
        except (IOError, OSError) as e:
            logger.error("Failed to write artifact", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to write {path}: {e}", path=str(path)) from e

    def _read(self, filename: str) -> list[dict[str, Any]]:
        path = self.data_dir / filename
        if not path.exists():
            raise ArtifactError(
                f"Missing artifact {path}",
                path=str(path),
                advice="Run `gemrec gen-data` with the same --out first",
            )
        try:
            with open(path, encoding="utf-8") as f:
                records = [json.loads(line) for line in f if line.strip()]
        except (IOError, OSError) as e:
            logger.error("Failed to read artifact", path=str(path), error=str(e))
            raise ArtifactError(f"Failed to read {path}: {e}", path=str(path)) from e
        except json.JSONDecodeError as e:
            raise ArtifactError(f"Malformed JSON line in {path}: {e}", path=str(path)) from e
        logger.debug("Read artifact", path=str(path), records=len(records))
        return records

    def save_items(self, embeddings: Sequence[ItemEmbedding], sponsored: set[int]) -> None:
        self._write(
            self.ITEMS_FILE,
            (
                {
                    "item_id": e.item_id,
                    "embedding": list(e.vector),
                    "sponsored": e.item_id in sponsored,
                }
                for e in embeddings
            ),
        )

    def load_items(self) -> tuple[list[ItemEmbedding], set[int]]:
        try:
            records = self._read(self.ITEMS_FILE)
            embeddings = [
                ItemEmbedding(int(r["item_id"]), tuple(float(v) for v in r["embedding"]))
                for r in records
            ]
            sponsored = {int(r["item_id"]) for r in records if r.get("sponsored")}
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"Malformed item record: {e}", file=self.ITEMS_FILE) from e
        return embeddings, sponsored

    def save_semantic_ids(self, sid_map: dict[int, SemanticId]) -> None:
        self._write(
            self.SEMANTIC_IDS_FILE,
            (
                {"item_id": item_id, "codes": list(sid.codes), "disamb": sid.disambiguator}
                for item_id, sid in sorted(sid_map.items())
            ),
        )

    def load_semantic_ids(self) -> dict[int, SemanticId]:
        try:
            return {
                int(r["item_id"]): SemanticId(tuple(int(c) for c in r["codes"]), int(r["disamb"]))
                for r in self._read(self.SEMANTIC_IDS_FILE)
            }
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(
                f"Malformed semantic-ID record: {e}", file=self.SEMANTIC_IDS_FILE
            ) from e

    def save_bids(self, bids: dict[int, float], name: str = "bids") -> None:
        self._write(
            f"{name}.jsonl",
            ({"item_id": item_id, "bid": bid} for item_id, bid in sorted(bids.items())),
        )

    def load_bids(self, name: str = "bids") -> dict[int, float]:
        try:
            return {int(r["item_id"]): float(r["bid"]) for r in self._read(f"{name}.jsonl")}
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"Malformed bid record: {e}", file=f"{name}.jsonl") from e

    def save_trajectories(self, trajectories: Sequence[Trajectory]) -> None:
        self._write(
            self.TRAJECTORIES_FILE,
            (
                {
                    "user_id": t.user_id,
                    "events": [{"mode": ev.mode.value, "item_id": ev.item_id} for ev in t.events],
                }
                for t in trajectories
            ),
        )

    def load_trajectories(self) -> list[Trajectory]:
        try:
            return [
                Trajectory(
                    int(r["user_id"]),
                    tuple(
                        Interaction(Mode.from_string(ev["mode"]), int(ev["item_id"]))
                        for ev in r["events"]
                    ),
                )
                for r in self._read(self.TRAJECTORIES_FILE)
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(
                f"Malformed trajectory record: {e}", file=self.TRAJECTORIES_FILE
            ) from e
