"""Repository interfaces following the Repository pattern."""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Any

from gemrec.domain.models import ItemEmbedding, SemanticId, Trajectory


class IMarketplaceRepository(ABC):
    """Interface for marketplace artifacts (items, IDs, bids, trajectories)."""

    @abstractmethod
    def save_items(self, embeddings: Sequence[ItemEmbedding], sponsored: set[int]) -> None:
        """
        Save the item catalog.

        Args:
            embeddings: Item embeddings ordered by item id
            sponsored: Ids of sponsored items
        """
        pass

    @abstractmethod
    def load_items(self) -> tuple[list[ItemEmbedding], set[int]]:
        """
        Load the item catalog.

        Returns:
            (embeddings, sponsored item ids)

        Raises:
            ArtifactError: If the file is missing or malformed
        """
        pass

    @abstractmethod
    def save_semantic_ids(self, sid_map: dict[int, SemanticId]) -> None:
        """Save the item -> semantic ID map."""
        pass

    @abstractmethod
    def load_semantic_ids(self) -> dict[int, SemanticId]:
        """
        Load the item -> semantic ID map.

        Raises:
            ArtifactError: If the file is missing or malformed
        """
        pass

    @abstractmethod
    def save_bids(self, bids: dict[int, float], name: str = "bids") -> None:
        """Save sponsored bids under an artifact name."""
        pass

    @abstractmethod
    def load_bids(self, name: str = "bids") -> dict[int, float]:
        """
        Load sponsored bids.

        Raises:
            ArtifactError: If the file is missing or malformed
        """
        pass

    @abstractmethod
    def save_trajectories(self, trajectories: Sequence[Trajectory]) -> None:
        """Save generated trajectories."""
        pass

    @abstractmethod
    def load_trajectories(self) -> list[Trajectory]:
        """
        Load trajectories.

        Raises:
            ArtifactError: If the file is missing or malformed
        """
        pass


class IModelRepository(ABC):
    """Interface for scorer model persistence."""

    @abstractmethod
    def save_model(self, document: dict[str, Any], name: str = "model") -> None:
        """
        Persist a serialized scorer.

        Args:
            document: Self-describing scorer document
            name: Artifact name
        """
        pass

    @abstractmethod
    def load_model(self, name: str = "model") -> dict[str, Any]:
        """
        Load a serialized scorer.

        Returns:
            Scorer document with a verified format header

        Raises:
            ArtifactError: If the file is missing, malformed or has a wrong header
        """
        pass

    @abstractmethod
    def model_exists(self, name: str = "model") -> bool:
        """Check whether a model artifact exists."""
        pass


class IReportRepository(ABC):
    """Interface for evaluation and audit outputs."""

    @abstractmethod
    def write_table(
        self, name: str, rows: Sequence[dict[str, Any]], columns: Sequence[str]
    ) -> None:
        """
        Write a CSV table with a fixed column order.

        Args:
            name: File stem
            rows: Row records keyed by column
            columns: Column order
        """
        pass

    @abstractmethod
    def write_series(
        self, name: str, points: Sequence[tuple[float, float]], header: tuple[str, str]
    ) -> None:
        """Write a two-column TSV series."""
        pass

    @abstractmethod
    def write_json(self, name: str, document: dict[str, Any]) -> None:
        """Write a JSON document with sorted keys."""
        pass
