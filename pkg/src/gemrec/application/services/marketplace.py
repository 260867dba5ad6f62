"""Synthetic marketplace: sponsored inventory, bids and the data-generation policy."""

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax

from gemrec.domain.exceptions import (
    ConfigurationError,
    EmptyInventoryError,
    NoCandidateError,
    ValidationError,
)
from gemrec.domain.models import (
    BID_CEILING,
    BID_FLOOR,
    FloatArray,
    Interaction,
    Inventory,
    InventoryItem,
    Mode,
    OrganicHistory,
    PolicyParams,
    SemanticId,
    Trajectory,
)
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

CLIP_PERCENTILE = 99.9


def designate_sponsored(
    item_ids: Sequence[int], fraction: float, rng: np.random.Generator
) -> set[int]:
    """
    Pick round(fraction * N) items uniformly as the sponsored subset.

    Raises:
        ConfigurationError: If fraction is outside [0, 1]
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError("Sponsored fraction must be in [0, 1]", fraction=fraction)
    n_sponsored = int(math.floor(fraction * len(item_ids) + 0.5))
    chosen = rng.choice(np.asarray(sorted(item_ids)), size=n_sponsored, replace=False)
    return {int(i) for i in chosen}


def build_inventory(
    sid_map: Mapping[int, SemanticId],
    sponsored: Iterable[int],
    bids: Optional[Mapping[int, float]] = None,
) -> Inventory:
    """
    Assemble an Inventory from semantic IDs, the sponsored set and optional bids.

    Raises:
        ValidationError: If a sponsored id is unknown or an organic item has a bid
    """
    sponsored_set = set(sponsored)
    unknown = sponsored_set - set(sid_map)
    if unknown:
        raise ValidationError("Sponsored items missing from the catalog", items=sorted(unknown))
    bids = bids or {}
    try:
        items = tuple(
            InventoryItem(
                item_id=item_id,
                sid=sid,
                sponsored=item_id in sponsored_set,
                bid=bids.get(item_id),
            )
            for item_id, sid in sid_map.items()
        )
    except ValueError as e:
        raise ValidationError(f"Invalid inventory: {e}") from e
    return Inventory(items)


def draw_raw_bids(n: int, mu: float, sigma: float, rng: np.random.Generator) -> FloatArray:
    """Pre-clip LogNormal(mu, sigma) bid draws."""
    return rng.lognormal(mean=mu, sigma=sigma, size=n)


def normalize_bids(raw: FloatArray) -> FloatArray:
    """
    Clip at the empirical 99.9th percentile and map affinely onto [0.1, 1.0].

    A degenerate range (all values equal after clipping) maps to the floor.
    """
    if raw.size == 0:
        return raw.astype(np.float64)
    cap = np.percentile(raw, CLIP_PERCENTILE)
    clipped = np.minimum(raw, cap)
    low, high = float(clipped.min()), float(clipped.max())
    if high - low <= 0.0:
        return np.full(raw.shape, BID_FLOOR, dtype=np.float64)
    scaled = BID_FLOOR + (BID_CEILING - BID_FLOOR) * (clipped - low) / (high - low)
    return np.clip(scaled, BID_FLOOR, BID_CEILING)


def assign_bids(
    inventory: Inventory, mu: float = 0.0, sigma: float = 0.2, seed: int = 0
) -> Inventory:
    """
    Draw normalized bids for every sponsored item.

    Args:
        inventory: Inventory with the sponsored subset designated
        mu: Log-normal location
        sigma: Log-normal scale
        seed: RNG seed

    Returns:
        New Inventory with bids in [0.1, 1.0] on sponsored items

    Raises:
        EmptyInventoryError: If no item is sponsored
    """
    sponsored = inventory.sponsored_ids
    if not sponsored:
        raise EmptyInventoryError("Cannot assign bids without sponsored items")
    rng = np.random.default_rng(seed)
    bids = normalize_bids(draw_raw_bids(len(sponsored), mu, sigma, rng))
    logger.info(
        "Assigned sponsored bids",
        n_sponsored=len(sponsored),
        mean_bid=float(bids.mean()),
        seed=seed,
    )
    return inventory.with_bids({item_id: float(b) for item_id, b in zip(sponsored, bids)})


class SponsoredPrefixIndex:
    """Sponsored items grouped by code prefix, for relevance filtering."""

    def __init__(self, inventory: Inventory) -> None:
        """
        Index sponsored items with bids by every code prefix length.

        Args:
            inventory: Inventory with bids assigned
        """
        self.depth = inventory.depth
        self._by_prefix: dict[tuple[int, ...], list[int]] = defaultdict(list)
        for item in inventory.items:
            if item.sponsored and item.bid is not None:
                for k in range(1, self.depth + 1):
                    self._by_prefix[item.sid.codes[:k]].append(item.item_id)

    def candidates(
        self, target: SemanticId, d: int, exclude: Optional[int] = None
    ) -> list[int]:
        """
        Sponsored items sharing at least d leading codes with the target.

        Relaxes d one level at a time down to 1 while the set is empty.

        Args:
            target: Semantic ID of the organic target
            d: Required prefix match depth
            exclude: Item id to leave out (the target itself)

        Returns:
            Candidate item ids, ascending; empty if nothing matches even at depth 1
        """
        for depth in range(min(d, self.depth), 0, -1):
            found = [i for i in self._by_prefix.get(target.codes[:depth], []) if i != exclude]
            if found:
                return found
        return []


def relevance_filter(
    target: SemanticId, inventory: Inventory, d: int, exclude: Optional[int] = None
) -> list[int]:
    """Sponsored candidates for a target with prefix-depth relaxation."""
    return SponsoredPrefixIndex(inventory).candidates(target, d, exclude=exclude)


def auction_probabilities(bids: Sequence[float], tau: float) -> FloatArray:
    """Softmax win probabilities exp(b/tau) / sum exp(b/tau)."""
    if tau <= 0:
        raise ConfigurationError("Auction temperature must be > 0", tau=tau)
    return np.asarray(softmax(np.asarray(bids, dtype=np.float64) / tau), dtype=np.float64)


def auction_sample(
    candidates: Sequence[int],
    bids: Mapping[int, float],
    tau: float,
    rng: np.random.Generator,
) -> int:
    """
    Draw an auction winner with softmax-over-bids probabilities.

    Uses exactly one uniform draw from rng per auction.

    Raises:
        NoCandidateError: If candidates is empty
    """
    if not candidates:
        raise NoCandidateError("Auction has no candidates")
    probabilities = auction_probabilities([bids[c] for c in candidates], tau)
    u = rng.random()
    index = int(np.searchsorted(np.cumsum(probabilities), u, side="right"))
    return candidates[min(index, len(candidates) - 1)]


def frequency_cap(delta_t: float, p: float, r: float) -> float:
    """
    Display acceptance probability p * min(1, delta_t * r).

    delta_t = math.inf stands for "no ad shown yet" and yields p.

    Raises:
        ValidationError: If delta_t is negative
    """
    if delta_t < 0:
        raise ValidationError("Steps since last ad must be >= 0", delta_t=delta_t)
    if delta_t == 0:
        return 0.0
    return p * min(1.0, delta_t * r)


@dataclass(frozen=True)
class GenerationResult:
    """Trajectories plus the realized ad statistics."""

    trajectories: list[Trajectory]
    n_ads: int
    n_events: int

    @property
    def ad_fraction(self) -> float:
        return self.n_ads / self.n_events if self.n_events else 0.0


class MarketplaceSimulator:
    """Replays organic histories through the frequency-capped two-stage ad policy."""

    def __init__(self, inventory: Inventory, params: PolicyParams) -> None:
        """
        Initialize simulator.

        Args:
            inventory: Inventory with bids assigned
            params: Policy parameters

        Raises:
            ConfigurationError: If the prefix depth exceeds the code depth
        """
        if params.prefix_depth > inventory.depth:
            raise ConfigurationError(
                "Relevance prefix depth exceeds semantic ID depth",
                prefix_depth=params.prefix_depth,
                depth=inventory.depth,
            )
        self.inventory = inventory
        self.params = params
        self.bids = inventory.bids
        self.index = SponsoredPrefixIndex(inventory)

    def replay(self, history: OrganicHistory, seed: int) -> Trajectory:
        """
        Inject ads into one organic history.

        The user's stream is seeded by (seed, user_id). One uniform is drawn
        per organic item for the acceptance gate; an accepted ad is logged
        right before its anchoring organic item.
        """
        rng = np.random.default_rng([seed, history.user_id])
        p, r = self.params.accept_rate, self.params.recovery_rate
        delta_t = math.inf
        events: list[Interaction] = []

        for item_id in history.item_ids:
            if item_id not in self.inventory:
                raise ValidationError(
                    "History references an unknown item",
                    user_id=history.user_id,
                    item_id=item_id,
                )
            if rng.random() < frequency_cap(delta_t, p, r):
                target = self.inventory.get(item_id).sid
                candidates = self.index.candidates(
                    target, self.params.prefix_depth, exclude=item_id
                )
                if candidates:
                    winner = auction_sample(candidates, self.bids, self.params.tau, rng)
                    events.append(Interaction(Mode.SPONSORED, winner))
                    delta_t = 0
            events.append(Interaction(Mode.ORGANIC, item_id))
            delta_t += 1

        return Trajectory(history.user_id, tuple(events))


def generate_trajectories(
    histories: Sequence[OrganicHistory],
    inventory: Inventory,
    params: PolicyParams,
    seed: int = 0,
) -> GenerationResult:
    """
    Run the data-generation policy over every organic history.

    Args:
        histories: Organic histories
        inventory: Inventory with bids
        params: Policy parameters
        seed: Global seed; each user derives its own stream

    Returns:
        GenerationResult with trajectories in input order
    """
    simulator = MarketplaceSimulator(inventory, params)
    trajectories = [simulator.replay(history, seed) for history in histories]
    n_ads = sum(t.ad_count for t in trajectories)
    n_events = sum(len(t) for t in trajectories)
    result = GenerationResult(trajectories, n_ads, n_events)
    logger.info(
        "Generated trajectories",
        n_users=len(trajectories),
        n_events=n_events,
        n_ads=n_ads,
        ad_fraction=round(result.ad_fraction, 4),
    )
    return result


@dataclass(frozen=True)
class ShockResult:
    """Shocked inventory and the identity of the shocked subset."""

    inventory: Inventory
    shocked: frozenset[int]


def apply_bid_shock(
    inventory: Inventory,
    fraction: float = 0.05,
    multiplier: float = 10.0,
    seed: int = 0,
) -> ShockResult:
    """
    Multiply the bids of ceil(fraction * |I_ad|) uniformly chosen sponsored items.

    Args:
        inventory: Inventory with bids (left unchanged)
        fraction: Share of sponsored items to shock, in (0, 1]
        multiplier: Bid multiplier
        seed: RNG seed

    Returns:
        ShockResult with a new inventory and the shocked item ids

    Raises:
        ConfigurationError: If fraction or multiplier is out of range
        EmptyInventoryError: If no sponsored item has a bid
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError("Shock fraction must be in (0, 1]", fraction=fraction)
    if multiplier <= 0:
        raise ConfigurationError("Shock multiplier must be > 0", multiplier=multiplier)
    bids = inventory.bids
    if not bids:
        raise EmptyInventoryError("Cannot shock an inventory without bids")

    ad_ids = np.asarray(sorted(bids))
    n_shocked = min(len(ad_ids), math.ceil(fraction * len(ad_ids) - 1e-9))
    rng = np.random.default_rng(seed)
    shocked = frozenset(int(i) for i in rng.choice(ad_ids, size=n_shocked, replace=False))
    shocked_bids = {item_id: bids[item_id] * multiplier for item_id in shocked}

    logger.info(
        "Applied bid shock",
        n_shocked=n_shocked,
        n_sponsored=len(ad_ids),
        multiplier=multiplier,
        seed=seed,
    )
    return ShockResult(inventory.with_bids(shocked_bids), shocked)


def synth_organic_histories(
    n_users: int,
    length_range: tuple[int, int],
    inventory: Inventory,
    category_bias: float = 0.9,
    seed: int = 0,
    locality: float = 0.5,
) -> list[OrganicHistory]:
    """
    Random walks over items biased toward each user's category.

    A user's category is the first code of a uniformly drawn item. After the
    first item, each step moves with probability `locality` to a uniform
    neighbour of the previous item (an item sharing all but its last code).
    Otherwise it jumps, with probability category_bias, to a uniform item of
    the user's category, else to a uniform item of the whole catalog.

    Raises:
        EmptyInventoryError: If the inventory is empty
        ConfigurationError: If the length range or a probability is invalid
    """
    if len(inventory) == 0:
        raise EmptyInventoryError("Cannot synthesize histories over an empty inventory")
    low, high = length_range
    if low < 1 or high < low:
        raise ConfigurationError("Invalid history length range", length_range=length_range)
    if not 0.0 <= locality <= 1.0:
        raise ConfigurationError("Walk locality must be in [0, 1]", locality=locality)

    all_ids = np.asarray([it.item_id for it in inventory.items])
    width = max(1, inventory.depth - 1)
    by_category: dict[int, list[int]] = defaultdict(list)
    by_neighbourhood: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for it in inventory.items:
        by_category[it.sid.codes[0]].append(it.item_id)
        by_neighbourhood[it.sid.codes[:width]].append(it.item_id)
    category_items = {c: np.asarray(ids) for c, ids in by_category.items()}
    neighbours = {p: np.asarray(ids) for p, ids in by_neighbourhood.items()}

    histories = []
    for user_id in range(n_users):
        rng = np.random.default_rng([seed, user_id])
        length = int(rng.integers(low, high + 1))
        category = inventory.get(int(rng.choice(all_ids))).sid.codes[0]
        pool = category_items[category]
        items: list[int] = []
        for _ in range(length):
            if items and rng.random() < locality:
                source = neighbours[inventory.get(items[-1]).sid.codes[:width]]
            elif rng.random() < category_bias:
                source = pool
            else:
                source = all_ids
            items.append(int(rng.choice(source)))
        histories.append(OrganicHistory(user_id, tuple(items)))

    logger.info(
        "Synthesized organic histories",
        n_users=n_users,
        length_range=length_range,
        locality=locality,
    )
    return histories
