"""Bid-modulated hierarchical decoding: flag sampling, beam search, allocation and pricing."""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit, log_softmax

from gemrec.application.services.bid_lookup import BidLookup
from gemrec.application.services.semantic_index import SidTrie
from gemrec.domain.exceptions import NoAdAvailableError, ValidationError
from gemrec.domain.models import (
    DecodeConfig,
    DecodeResult,
    FlagMode,
    Mode,
    RankedCandidate,
    SemanticId,
    Slot,
    Vocabulary,
)
from gemrec.domain.services import IScorer
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

Path = tuple[int, ...]


def modulate_slot_logits(
    z_org: float, z_ad: float, lambda_slot: float, b_max: float
) -> tuple[float, float]:
    """Shift the AD logit by lambda_slot * log(1 + b_max); the ORG logit is untouched."""
    return z_org, z_ad + lambda_slot * math.log1p(b_max)


def modulate_item_logits(
    scores: Mapping[int, float],
    lambda_item: float,
    lookup: BidLookup,
    prefix: Sequence[int],
) -> dict[int, float]:
    """
    Shift each code score by lambda_item * log(1 + B(prefix + code)).

    Args:
        scores: Code value -> logit at the next level
        lambda_item: Item-level strength
        lookup: Prefix bid table
        prefix: Codes decoded so far

    Returns:
        Code value -> modulated logit (no-bid subtrees get boost 0)
    """
    return {
        code: z + lookup.boost((*prefix, code), lambda_item) for code, z in scores.items()
    }


@dataclass(frozen=True)
class FlagDecision:
    """Committed flag and the AD probability it was drawn with."""

    flag: Mode
    p_ad: float


def sample_flag(
    z_org: float, z_ad: float, flag_mode: FlagMode, rng: Optional[np.random.Generator]
) -> FlagDecision:
    """
    Commit to a slot flag.

    SAMPLE draws one uniform u and picks AD iff u < P(AD), where P(AD) is the
    softmax of the two logits. FORCE modes draw nothing.
    """
    p_ad = float(expit(z_ad - z_org))
    if flag_mode is FlagMode.FORCE_AD:
        return FlagDecision(Mode.SPONSORED, p_ad)
    if flag_mode is FlagMode.FORCE_ORG:
        return FlagDecision(Mode.ORGANIC, p_ad)
    if rng is None:
        raise ValueError("SAMPLE flag mode needs a random generator")
    flag = Mode.SPONSORED if rng.random() < p_ad else Mode.ORGANIC
    return FlagDecision(flag, p_ad)


@dataclass(frozen=True)
class _Step:
    value: int
    score: float
    base: float


class GemDecoder:
    """
    Deterministic width-K beam search over semantic-ID slots with bid modulation.

    The scorer, trie and lookup are shared read-only; a decoder instance holds
    no per-request state. `modulate_slot` and `modulate_items` are the only
    places bids and lambda enter.
    """

    def __init__(self, scorer: IScorer, trie: SidTrie, lookup: BidLookup) -> None:
        """
        Initialize decoder.

        Args:
            scorer: Autoregressive scorer
            trie: Semantic-ID trie of the catalog
            lookup: Prefix bid table over the eligible set
        """
        self.scorer = scorer
        self.trie = trie
        self.lookup = lookup
        self.vocabulary: Vocabulary = scorer.vocabulary
        if self.vocabulary.depth != trie.depth:
            raise ValidationError(
                "Scorer and trie depths differ",
                scorer_depth=self.vocabulary.depth,
                trie_depth=trie.depth,
            )

    def with_lookup(self, lookup: BidLookup) -> "GemDecoder":
        """Same decoder over a rebuilt bid table (bid updates, shocks)."""
        return type(self)(self.scorer, self.trie, lookup)

    def modulate_slot(
        self, z_org: float, z_ad: float, config: DecodeConfig
    ) -> tuple[float, float]:
        if not config.modulation_enabled:
            return z_org, z_ad
        return modulate_slot_logits(z_org, z_ad, config.slot_lambda, self.lookup.b_max)

    def modulate_items(
        self,
        scores: dict[int, float],
        prefix: Path,
        flag: Mode,
        config: DecodeConfig,
    ) -> dict[int, float]:
        if flag is Mode.ORGANIC or not config.modulation_enabled:
            return scores
        return modulate_item_logits(scores, config.item_lambda, self.lookup, prefix)

    def flag_logits(self, context: Sequence[int]) -> tuple[float, float]:
        """Base (ORG, AD) logits at the next flag slot."""
        scores = self.scorer.logits(context, Slot.flag())
        return scores[Vocabulary.ORG], scores[Vocabulary.AD]

    def _slot(self, prefix: Path) -> Slot:
        if len(prefix) < self.vocabulary.depth:
            return Slot.code(len(prefix) + 1)
        return Slot.disamb()

    def _token(self, position: int, value: int) -> int:
        if position < self.vocabulary.depth:
            return self.vocabulary.code_token(position + 1, value)
        return self.vocabulary.disamb_token(value)

    def _allowed(self, prefix: Path, flag: Mode, config: DecodeConfig) -> list[int]:
        if config.trie_constrained:
            children = self.trie.children(prefix)
            if flag is Mode.SPONSORED:
                children = [c for c in children if self.lookup.has_bid((*prefix, c))]
            return children
        if len(prefix) < self.vocabulary.depth:
            return list(range(self.vocabulary.codebook_size))
        return list(range(self.vocabulary.n_disamb))

    def step_logits(
        self,
        context: Sequence[int],
        prefix: Path,
        flag: Mode,
        config: DecodeConfig,
    ) -> tuple[dict[int, float], dict[int, float]]:
        """
        Base and modulated logits of the values allowed after `prefix`.

        Disambiguator steps are never modulated. Both maps are empty when no
        value is allowed.
        """
        allowed = self._allowed(prefix, flag, config)
        if not allowed:
            return {}, {}
        step_context = (
            *context,
            self.vocabulary.flag_token(flag),
            *(self._token(i, v) for i, v in enumerate(prefix)),
        )
        token_scores = self.scorer.logits(step_context, self._slot(prefix))
        base = {v: token_scores[self._token(len(prefix), v)] for v in allowed}
        if len(prefix) < self.vocabulary.depth:
            return base, self.modulate_items(base, prefix, flag, config)
        return base, base

    def _step_scores(
        self,
        context: Sequence[int],
        prefix: Path,
        flag: Mode,
        config: DecodeConfig,
    ) -> list[_Step]:
        """Expansion scores of one beam: renormalized modulated log-probs plus raw base."""
        base, modulated = self.step_logits(context, prefix, flag, config)
        if not base:
            return []
        values = list(base)
        normalized = log_softmax(np.asarray([modulated[v] for v in values], dtype=np.float64))
        return [_Step(v, float(s), base[v]) for v, s in zip(values, normalized)]

    def _ranked(self, beams: list[tuple[Path, float, float]]) -> list[RankedCandidate]:
        return [
            RankedCandidate(
                sid=SemanticId(path[:-1], path[-1]),
                item_id=self.trie.resolve(path),
                score=score,
                base_score=base,
            )
            for path, score, base in beams
        ]

    def _check_ad_available(self, flag: Mode, config: DecodeConfig) -> None:
        if flag is Mode.SPONSORED and config.trie_constrained and not self.lookup.eligible:
            raise NoAdAvailableError("No eligible sponsored item for an AD slot")

    def beam_search(
        self, context: Sequence[int], flag: Mode, config: DecodeConfig
    ) -> list[RankedCandidate]:
        """
        Width-K beam over c_1..c_D and the disambiguator.

        Beams are ordered by (-score, path) after every expansion, so ties go
        to the lower code value and then the lexicographically smaller path.

        Raises:
            NoAdAvailableError: Constrained AD decoding with an empty eligible set
        """
        self._check_ad_available(flag, config)
        beams: list[tuple[Path, float, float]] = [((), 0.0, 0.0)]
        for _ in range(self.vocabulary.depth + 1):
            expanded = [
                ((*path, step.value), score + step.score, base + step.base)
                for path, score, base in beams
                for step in self._step_scores(context, path, flag, config)
            ]
            expanded.sort(key=lambda beam: (-beam[1], beam[0]))
            beams = expanded[: config.beam_width]
        return self._ranked(beams)

    def enumerate_sequences(
        self, context: Sequence[int], flag: Mode, config: DecodeConfig
    ) -> list[RankedCandidate]:
        """Exhaustive ranking of every full sequence; accumulates scores exactly as beam_search."""
        self._check_ad_available(flag, config)
        finished: list[tuple[Path, float, float]] = []

        def expand(path: Path, score: float, base: float) -> None:
            if len(path) == self.vocabulary.depth + 1:
                finished.append((path, score, base))
                return
            for step in self._step_scores(context, path, flag, config):
                expand((*path, step.value), score + step.score, base + step.base)

        expand((), 0.0, 0.0)
        finished.sort(key=lambda beam: (-beam[1], beam[0]))
        return self._ranked(finished)

    def decode_next(
        self,
        context: Sequence[int],
        config: DecodeConfig,
        rng: Optional[np.random.Generator] = None,
    ) -> DecodeResult:
        """
        Decode the next slot: commit a flag, then beam-search the item.

        Args:
            context: Token ids starting with BOS, ending on a segment boundary
            config: Decoding parameters
            rng: Flag-sampling generator; seeded from config.seed when omitted

        Returns:
            DecodeResult with first-price payment (bid for an eligible AD, else 0)
        """
        z_org, z_ad = self.flag_logits(context)
        m_org, m_ad = self.modulate_slot(z_org, z_ad, config)
        if rng is None and config.flag_mode is FlagMode.SAMPLE:
            rng = np.random.default_rng(config.seed)
        decision = sample_flag(m_org, m_ad, config.flag_mode, rng)

        ranking = self.beam_search(context, decision.flag, config)
        top = ranking[0]
        is_ad = decision.flag is Mode.SPONSORED
        if is_ad:
            base_flag = float(log_expit(z_ad - z_org))
            mod_flag = float(log_expit(m_ad - m_org))
        else:
            base_flag = float(log_expit(z_org - z_ad))
            mod_flag = float(log_expit(m_org - m_ad))

        price = 0.0
        if is_ad and top.item_id is not None and top.item_id in self.lookup.eligible:
            price = self.lookup.bids[top.item_id]

        return DecodeResult(
            flag=decision.flag,
            sid=top.sid,
            item_id=top.item_id,
            base_score=base_flag + top.base_score,
            mod_score=mod_flag + top.score,
            p_ad_pre=float(expit(z_ad - z_org)),
            p_ad_post=decision.p_ad,
            price=price,
            ranking=tuple(ranking),
        )

    def ad_probability(self, context: Sequence[int], config: DecodeConfig) -> float:
        """P_lambda(AD | context) after slot-level modulation."""
        z_org, z_ad = self.flag_logits(context)
        m_org, m_ad = self.modulate_slot(z_org, z_ad, config)
        return float(expit(m_ad - m_org))

    def allocation_probability(
        self, item_id: int, context: Sequence[int], config: DecodeConfig
    ) -> float:
        """
        Analytic allocation x_i = P_lambda(AD) * [AD beam winner == item].

        No sampling is involved.
        """
        ranking = self.beam_search(context, Mode.SPONSORED, config)
        if not ranking or ranking[0].item_id != item_id:
            return 0.0
        return self.ad_probability(context, config)
