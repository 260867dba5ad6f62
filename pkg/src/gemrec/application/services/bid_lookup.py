"""Prefix-aware bid aggregation over the semantic-ID trie."""

import math
from collections.abc import Iterable, Mapping, Sequence
from typing import Optional

from gemrec.application.services.semantic_index import SidTrie
from gemrec.domain.exceptions import ValidationError
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)


class BidLookup:
    """
    Maximum eligible bid per trie prefix.

    Prefixes run over full paths (codes then disambiguator), lengths 0..D+1.
    A prefix whose subtree holds no eligible item has no entry and boosts by 0.
    """

    def __init__(self, table: dict[tuple[int, ...], float], bids: dict[int, float]) -> None:
        """
        Initialize lookup.

        Args:
            table: Prefix -> max eligible bid
            bids: Bids of the eligible items (first-price payments)
        """
        self._table = table
        self.bids = bids
        self.eligible = frozenset(bids)

    @property
    def b_max(self) -> float:
        """Largest eligible bid, 0.0 when nothing is eligible."""
        return self._table.get((), 0.0)

    def bid(self, prefix: Sequence[int]) -> Optional[float]:
        """Max bid under prefix, or None for the no-bid sentinel."""
        return self._table.get(tuple(prefix))

    def has_bid(self, prefix: Sequence[int]) -> bool:
        return tuple(prefix) in self._table

    def boost(self, prefix: Sequence[int], lam: float) -> float:
        """lam * log(1 + B(prefix)), with 0 for sentinel prefixes."""
        value = self._table.get(tuple(prefix))
        if value is None:
            return 0.0
        return lam * math.log1p(value)

    def __len__(self) -> int:
        return len(self._table)


def build_bid_lookup(
    trie: SidTrie,
    bids: Mapping[int, float],
    eligible: Optional[Iterable[int]] = None,
) -> BidLookup:
    """
    Aggregate bids bottom-up: each prefix holds the max bid of its eligible subtree.

    Args:
        trie: Semantic-ID trie
        bids: Sponsored item bids
        eligible: Eligible items; defaults to every item with a positive bid

    Returns:
        BidLookup (all-sentinel with b_max 0 when nothing is eligible)

    Raises:
        ValidationError: If an eligible item has no bid or is not in the trie
    """
    chosen = frozenset(
        eligible if eligible is not None else (i for i, b in bids.items() if b > 0)
    )
    missing = sorted(i for i in chosen if i not in bids or i not in trie)
    if missing:
        raise ValidationError(
            "Eligible items must be sponsored items with bids in the trie", items=missing[:10]
        )

    table: dict[tuple[int, ...], float] = {}
    for item_id in sorted(chosen):
        bid = float(bids[item_id])
        path = trie.sid_of(item_id).path
        for k in range(len(path) + 1):
            prefix = path[:k]
            current = table.get(prefix)
            if current is None or bid > current:
                table[prefix] = bid

    logger.debug(
        "Built bid lookup",
        eligible=len(chosen),
        prefixes=len(table),
        b_max=table.get((), 0.0),
    )
    return BidLookup(table, {item_id: float(bids[item_id]) for item_id in sorted(chosen)})
