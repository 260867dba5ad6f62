"""Domain models for the gemrec engine."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, ClassVar, NamedTuple, Optional

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

BID_FLOOR = 0.1
BID_CEILING = 1.0

MODEL_FORMAT = "GEMREC-SCORER-1"


class Mode(str, Enum):
    """Display mode of an interaction slot."""

    ORGANIC = "ORG"
    SPONSORED = "AD"

    @classmethod
    def from_string(cls, value: str) -> "Mode":
        """
        Create Mode from its file representation.

        Args:
            value: "ORG" or "AD" (case-insensitive)

        Returns:
            Mode enum value

        Raises:
            ValueError: If the value is not a known mode
        """
        try:
            return cls(value.upper())
        except ValueError as e:
            raise ValueError(f"Unsupported interaction mode: {value}") from e


class FlagMode(str, Enum):
    """How the decoder commits to a slot flag."""

    SAMPLE = "sample"
    FORCE_ORG = "force_org"
    FORCE_AD = "force_ad"

    @classmethod
    def from_string(cls, value: str) -> "FlagMode":
        """Create FlagMode from a CLI/request string."""
        try:
            return cls(value.lower())
        except ValueError as e:
            raise ValueError(f"Unsupported flag mode: {value}") from e


class SlotType(str, Enum):
    """Kind of position inside one interaction segment."""

    FLAG = "flag"
    CODE = "code"
    DISAMB = "disamb"


class Slot(NamedTuple):
    """A segment position; `level` is 1-based for CODE slots and 0 otherwise."""

    type: SlotType
    level: int = 0

    @classmethod
    def flag(cls) -> "Slot":
        return cls(SlotType.FLAG)

    @classmethod
    def code(cls, level: int) -> "Slot":
        return cls(SlotType.CODE, level)

    @classmethod
    def disamb(cls) -> "Slot":
        return cls(SlotType.DISAMB)


@dataclass(frozen=True)
class Vocabulary:
    """
    Unified token vocabulary.

    Layout: BOS, EOS, ORG, AD, then C code tokens per level (level 1 first),
    then the disambiguation tokens. Ids are dense and stable for a given
    (depth, codebook_size, n_disamb).
    """

    depth: int
    codebook_size: int
    n_disamb: int = 1

    BOS: ClassVar[int] = 0
    EOS: ClassVar[int] = 1
    ORG: ClassVar[int] = 2
    AD: ClassVar[int] = 3
    N_SPECIAL: ClassVar[int] = 4

    def __post_init__(self) -> None:
        """Validate vocabulary shape."""
        if self.depth < 1 or self.codebook_size < 1 or self.n_disamb < 1:
            raise ValueError(
                f"Invalid vocabulary shape: D={self.depth}, C={self.codebook_size}, "
                f"disamb={self.n_disamb}"
            )

    @property
    def size(self) -> int:
        return self.N_SPECIAL + self.depth * self.codebook_size + self.n_disamb

    @property
    def segment_length(self) -> int:
        """Tokens per interaction: flag, D codes, disambiguator."""
        return self.depth + 2

    def flag_token(self, mode: Mode) -> int:
        return self.AD if mode is Mode.SPONSORED else self.ORG

    def mode_of(self, token: int) -> Mode:
        """
        Map a flag token to its mode.

        Raises:
            ValueError: If the token is not a flag token
        """
        if token == self.AD:
            return Mode.SPONSORED
        if token == self.ORG:
            return Mode.ORGANIC
        raise ValueError(f"Token {token} is not a flag token")

    def code_token(self, level: int, value: int) -> int:
        """Token id of code `value` at 1-based `level`."""
        if not (1 <= level <= self.depth and 0 <= value < self.codebook_size):
            raise ValueError(f"Code out of range: level={level}, value={value}")
        return self.N_SPECIAL + (level - 1) * self.codebook_size + value

    def disamb_token(self, value: int) -> int:
        if not 0 <= value < self.n_disamb:
            raise ValueError(f"Disambiguator out of range: {value}")
        return self.N_SPECIAL + self.depth * self.codebook_size + value

    def token_value(self, token: int) -> tuple[Slot, int]:
        """
        Inverse of code_token / disamb_token / flag_token.

        Returns:
            (slot, value) where value is the code, disambiguator or flag token

        Raises:
            ValueError: For BOS, EOS or out-of-range ids
        """
        if token in (self.ORG, self.AD):
            return Slot.flag(), token
        offset = token - self.N_SPECIAL
        if 0 <= offset < self.depth * self.codebook_size:
            return Slot.code(offset // self.codebook_size + 1), offset % self.codebook_size
        offset -= self.depth * self.codebook_size
        if 0 <= offset < self.n_disamb:
            return Slot.disamb(), offset
        raise ValueError(f"Token {token} has no slot value")

    def legal_tokens(self, slot: Slot) -> tuple[int, ...]:
        """Tokens admissible at a slot, ascending by id."""
        if slot.type is SlotType.FLAG:
            return (self.ORG, self.AD)
        if slot.type is SlotType.CODE:
            start = self.code_token(slot.level, 0)
            return tuple(range(start, start + self.codebook_size))
        start = self.disamb_token(0)
        return tuple(range(start, start + self.n_disamb))

    def slot_after(self, context_length: int) -> Slot:
        """
        Slot of the next token for a context that starts with BOS.

        Raises:
            ValueError: If the context is empty
        """
        if context_length < 1:
            raise ValueError("Context must contain at least BOS")
        position = (context_length - 1) % self.segment_length
        if position == 0:
            return Slot.flag()
        if position <= self.depth:
            return Slot.code(position)
        return Slot.disamb()

    def slot_sequence(self) -> list[Slot]:
        """Slots of one segment, in order."""
        return [Slot.flag(), *(Slot.code(k) for k in range(1, self.depth + 1)), Slot.disamb()]

    def to_dict(self) -> dict[str, int]:
        return {
            "depth": self.depth,
            "codebook_size": self.codebook_size,
            "n_disamb": self.n_disamb,
        }


@dataclass(frozen=True)
class ItemEmbedding:
    """Content embedding of one catalog item."""

    item_id: int
    vector: tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate id, dimension and finiteness."""
        if self.item_id < 0:
            raise ValueError(f"Invalid item id: {self.item_id}")
        if len(self.vector) < 2:
            raise ValueError(f"Embedding dimension must be >= 2, got {len(self.vector)}")
        if not all(math.isfinite(v) for v in self.vector):
            raise ValueError(f"Embedding of item {self.item_id} has non-finite values")

    @property
    def dim(self) -> int:
        return len(self.vector)


@dataclass(frozen=True)
class Codebooks:
    """Residual codebooks: one (C, E) centroid table per level."""

    levels: tuple[FloatArray, ...]

    def __post_init__(self) -> None:
        """Validate shapes and freeze the centroid arrays."""
        if not self.levels:
            raise ValueError("Codebooks need at least one level")
        shape = self.levels[0].shape
        for table in self.levels:
            if table.ndim != 2 or table.shape != shape:
                raise ValueError("All codebook levels must share one (C, E) shape")
            if not np.all(np.isfinite(table)):
                raise ValueError("Codebook centroids must be finite")
            table.setflags(write=False)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def codebook_size(self) -> int:
        return int(self.levels[0].shape[0])

    @property
    def dim(self) -> int:
        return int(self.levels[0].shape[1])


@dataclass(frozen=True, order=True)
class SemanticId:
    """Hierarchical code tuple plus a collision disambiguator."""

    codes: tuple[int, ...]
    disambiguator: int = 0

    def __post_init__(self) -> None:
        """Validate code values."""
        if not self.codes:
            raise ValueError("Semantic ID needs at least one code")
        if any(c < 0 for c in self.codes) or self.disambiguator < 0:
            raise ValueError(f"Semantic ID values must be >= 0: {self}")

    @property
    def depth(self) -> int:
        return len(self.codes)

    @property
    def path(self) -> tuple[int, ...]:
        """Full trie path: codes followed by the disambiguator."""
        return (*self.codes, self.disambiguator)

    def __str__(self) -> str:
        """Return compact string representation."""
        return "-".join(str(c) for c in self.codes) + f"/{self.disambiguator}"


@dataclass(frozen=True)
class InventoryItem:
    """One catalog item with its sponsorship status and bid."""

    item_id: int
    sid: SemanticId
    sponsored: bool = False
    bid: Optional[float] = None

    def __post_init__(self) -> None:
        """Validate bid presence against sponsorship."""
        if not self.sponsored and self.bid is not None:
            raise ValueError(f"Organic item {self.item_id} cannot carry a bid")
        if self.bid is not None and not (math.isfinite(self.bid) and self.bid > 0):
            raise ValueError(f"Bid of item {self.item_id} must be positive, got {self.bid}")


@dataclass(frozen=True)
class Inventory:
    """Item universe ordered by item id."""

    items: tuple[InventoryItem, ...]
    _index: dict[int, InventoryItem] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Sort items and build the id index."""
        ordered = tuple(sorted(self.items, key=lambda it: it.item_id))
        index = {it.item_id: it for it in ordered}
        if len(index) != len(ordered):
            raise ValueError("Inventory contains duplicate item ids")
        object.__setattr__(self, "items", ordered)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._index

    def get(self, item_id: int) -> InventoryItem:
        """
        Look up an item.

        Raises:
            KeyError: If the item is unknown
        """
        return self._index[item_id]

    @property
    def depth(self) -> int:
        return self.items[0].sid.depth if self.items else 0

    @property
    def sponsored_ids(self) -> list[int]:
        return [it.item_id for it in self.items if it.sponsored]

    @property
    def bids(self) -> dict[int, float]:
        """Bids of sponsored items that have one."""
        return {it.item_id: it.bid for it in self.items if it.bid is not None}

    @property
    def sid_map(self) -> dict[int, SemanticId]:
        return {it.item_id: it.sid for it in self.items}

    def eligible_ids(self) -> frozenset[int]:
        """Sponsored items with positive bids (the default eligible set)."""
        return frozenset(it.item_id for it in self.items if it.sponsored and it.bid)

    def with_bids(self, bids: dict[int, float]) -> "Inventory":
        """
        Return a copy with the given bids replacing the current ones.

        Args:
            bids: Mapping item id -> new bid (sponsored items only)
        """
        updated = []
        for it in self.items:
            if it.item_id in bids:
                updated.append(
                    InventoryItem(it.item_id, it.sid, it.sponsored, float(bids[it.item_id]))
                )
            else:
                updated.append(it)
        return Inventory(tuple(updated))


@dataclass(frozen=True)
class PolicyParams:
    """Parameters of the synthetic data-generation policy."""

    prefix_depth: int = 2
    tau: float = 0.1
    accept_rate: float = 0.4
    recovery_rate: float = 0.05

    def __post_init__(self) -> None:
        """Validate parameter ranges."""
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not 0.0 <= self.accept_rate <= 1.0:
            raise ValueError(f"accept rate must be in [0, 1], got {self.accept_rate}")
        if self.recovery_rate <= 0:
            raise ValueError(f"recovery rate must be > 0, got {self.recovery_rate}")
        if self.prefix_depth < 1:
            raise ValueError(f"prefix depth must be >= 1, got {self.prefix_depth}")


@dataclass(frozen=True)
class Interaction:
    """One logged (mode, item) interaction."""

    mode: Mode
    item_id: int


@dataclass(frozen=True)
class Trajectory:
    """Ordered interactions of one user."""

    user_id: int
    events: tuple[Interaction, ...]

    def __len__(self) -> int:
        return len(self.events)

    @property
    def ad_count(self) -> int:
        return sum(1 for ev in self.events if ev.mode is Mode.SPONSORED)

    def without_ads(self) -> "Trajectory":
        """Return the organic-only projection of this trajectory."""
        return Trajectory(
            self.user_id, tuple(ev for ev in self.events if ev.mode is Mode.ORGANIC)
        )

    def split_holdout(self) -> tuple["Trajectory", Optional[Interaction]]:
        """
        Split off the held-out interaction.

        The held-out interaction is the ad logged right before the final organic
        item when there is one, otherwise the last interaction. The history is
        everything before it; the organic item after a held-out ad belongs to
        neither.
        """
        if not self.events:
            return self, None
        index = len(self.events) - 1
        if (
            index >= 1
            and self.events[index].mode is Mode.ORGANIC
            and self.events[index - 1].mode is Mode.SPONSORED
        ):
            index -= 1
        return Trajectory(self.user_id, self.events[:index]), self.events[index]


@dataclass(frozen=True)
class OrganicHistory:
    """Organic item sequence of one user before ad injection."""

    user_id: int
    item_ids: tuple[int, ...]


@dataclass(frozen=True)
class DecodeConfig:
    """Decoding parameters for one request."""

    lam: float = 0.0
    beam_width: int = 10
    lambda_slot: Optional[float] = None
    lambda_item: Optional[float] = None
    flag_mode: FlagMode = FlagMode.SAMPLE
    seed: int = 0
    trie_constrained: bool = True
    modulation_enabled: bool = True

    def __post_init__(self) -> None:
        """Validate lambda and beam width."""
        for name, value in (
            ("lambda", self.lam),
            ("lambda_slot", self.lambda_slot),
            ("lambda_item", self.lambda_item),
        ):
            if value is not None and not value >= 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        if self.beam_width < 1:
            raise ValueError(f"beam width must be >= 1, got {self.beam_width}")

    @property
    def slot_lambda(self) -> float:
        return self.lam if self.lambda_slot is None else self.lambda_slot

    @property
    def item_lambda(self) -> float:
        return self.lam if self.lambda_item is None else self.lambda_item


@dataclass(frozen=True)
class RankedCandidate:
    """One entry of a beam ranking."""

    sid: SemanticId
    item_id: Optional[int]
    score: float
    base_score: float


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of decoding one slot."""

    flag: Mode
    sid: SemanticId
    item_id: Optional[int]
    base_score: float
    mod_score: float
    p_ad_pre: float
    p_ad_post: float
    price: float
    ranking: tuple[RankedCandidate, ...] = ()

    @property
    def is_ad(self) -> bool:
        return self.flag is Mode.SPONSORED

    def to_response(self) -> dict[str, Any]:
        """Serialize to the decode response document."""
        return {
            "flag": self.flag.value,
            "codes": list(self.sid.codes),
            "disamb": self.sid.disambiguator,
            "item_id": self.item_id,
            "base_score": self.base_score,
            "mod_score": self.mod_score,
            "p_ad_pre": self.p_ad_pre,
            "p_ad_post": self.p_ad_post,
            "price": self.price,
        }


@dataclass(frozen=True)
class EvalCase:
    """A held-out next-interaction prediction case."""

    user_id: int
    context: tuple[int, ...]
    truth: Interaction
    truth_sid: SemanticId


@dataclass(frozen=True)
class EvalRecord:
    """
    A decoded evaluation case.

    `organic` is the organic-flag decode of the case (the result itself when
    the committed flag is ORG) and `p_organic` the probability the decoder
    had of committing ORG. Without them the record counts as organic exactly
    when its committed flag is.
    """

    case: EvalCase
    result: DecodeResult
    lam: float
    organic: Optional[DecodeResult] = None
    p_organic: Optional[float] = None

    @property
    def organic_result(self) -> Optional[DecodeResult]:
        if self.organic is not None:
            return self.organic
        return self.result if self.result.flag is Mode.ORGANIC else None

    @property
    def organic_weight(self) -> float:
        if self.p_organic is not None:
            return self.p_organic
        return 1.0 if self.result.flag is Mode.ORGANIC else 0.0


@dataclass
class MetricsRow:
    """Aggregated metrics for one (lambda, seed) evaluation."""

    lam: float
    ad_rate: float
    revenue: float
    ndcg10: float
    recall10: float
    o_ndcg10: Optional[float]
    o_recall10: Optional[float]
    ad_ndcg10: Optional[float]
    mean_prefix_depth: Optional[float]
    validity: Optional[float]
    hv_share: Optional[float]
    seed: int

    COLUMNS: ClassVar[tuple[str, ...]] = (
        "lambda",
        "ad_rate",
        "revenue",
        "ndcg10",
        "recall10",
        "o_ndcg10",
        "o_recall10",
        "ad_ndcg10",
        "mean_prefix_depth",
        "validity",
        "hv_share",
        "seed",
    )

    def as_record(self) -> dict[str, Any]:
        """Return the row keyed by CSV column name, in column order."""
        return {
            "lambda": self.lam,
            "ad_rate": self.ad_rate,
            "revenue": self.revenue,
            "ndcg10": self.ndcg10,
            "recall10": self.recall10,
            "o_ndcg10": self.o_ndcg10,
            "o_recall10": self.o_recall10,
            "ad_ndcg10": self.ad_ndcg10,
            "mean_prefix_depth": self.mean_prefix_depth,
            "validity": self.validity,
            "hv_share": self.hv_share,
            "seed": self.seed,
        }


@dataclass
class ShockRow:
    """One lambda row of the bid-shock experiment."""

    lam: float
    ad_rate: float
    revenue: float
    uplift: Optional[float]
    hv_share: Optional[float]
    seed: int

    COLUMNS: ClassVar[tuple[str, ...]] = (
        "lambda",
        "ad_rate",
        "revenue",
        "uplift",
        "hv_share",
        "seed",
    )

    def as_record(self) -> dict[str, Any]:
        return {
            "lambda": self.lam,
            "ad_rate": self.ad_rate,
            "revenue": self.revenue,
            "uplift": self.uplift,
            "hv_share": self.hv_share,
            "seed": self.seed,
        }


@dataclass
class AuditCheck:
    """Result of one invariant audit."""

    name: str
    passed: bool
    cases: int = 0
    failures: list[dict[str, Any]] = field(default_factory=list)
    notes: dict[str, Any] = field(default_factory=dict)


@dataclass
class AuditReport:
    """Collection of audit results."""

    checks: list[AuditCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def get(self, name: str) -> AuditCheck:
        """
        Look up a check by name.

        Raises:
            KeyError: If no check has that name
        """
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        """Serialize for the JSON report."""
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "cases": c.cases,
                    "failures": c.failures,
                    "notes": c.notes,
                }
                for c in self.checks
            ],
        }


@dataclass
class Progress:
    """Progress of a long-running use case."""

    phase: str
    completed: int = 0
    total: int = 0

    @property
    def fraction(self) -> float:
        """Completed fraction in [0, 1]; 0 when the total is unknown."""
        if self.total <= 0:
            return 0.0
        return min(1.0, self.completed / self.total)
