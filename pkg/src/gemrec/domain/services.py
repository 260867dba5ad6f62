"""Service interfaces for domain operations."""

from abc import ABC, abstractmethod
from collections.abc import Sequence

from gemrec.domain.models import Slot, Vocabulary


class IScorer(ABC):
    """
    Interface for autoregressive scorers over the unified vocabulary.

    Implementations return normalized log-probabilities restricted to the
    legal token set of the requested slot.
    """

    @property
    @abstractmethod
    def vocabulary(self) -> Vocabulary:
        """Vocabulary the scorer was built for."""
        pass

    @abstractmethod
    def logits(self, context: Sequence[int], slot: Slot) -> dict[int, float]:
        """
        Score the next token.

        Args:
            context: Token ids starting with BOS
            slot: Slot of the next token; must agree with the context position

        Returns:
            Mapping legal token id -> log-probability, ascending by token id

        Raises:
            PositionError: If the context is malformed or misaligned with slot
        """
        pass
