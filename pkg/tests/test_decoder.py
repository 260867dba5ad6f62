import itertools
import math
from collections.abc import Sequence
from typing import Optional

import numpy as np
import pytest

from gemrec.application.services.bid_lookup import build_bid_lookup
from gemrec.application.services.decoder import (
    GemDecoder,
    modulate_item_logits,
    modulate_slot_logits,
    sample_flag,
)
from gemrec.application.services.scorer import RandomTableScorer, check_position
from gemrec.application.services.semantic_index import build_trie
from gemrec.application.services.vocabulary import build_vocabulary
from gemrec.domain.exceptions import NoAdAvailableError, ValidationError
from gemrec.domain.models import (
    DecodeConfig,
    FlagMode,
    Mode,
    SemanticId,
    Slot,
    SlotType,
    Vocabulary,
)
from gemrec.domain.services import IScorer


class ContextFreeScorer(IScorer):
    """Fixed logits per slot type, independent of the context."""

    def __init__(
        self,
        vocabulary: Vocabulary,
        z_org: float = 0.0,
        z_ad: float = 0.0,
        codes: Optional[dict[int, list[float]]] = None,
    ) -> None:
        self._vocabulary = vocabulary
        self.z_org = z_org
        self.z_ad = z_ad
        self.codes = codes or {}

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def logits(self, context: Sequence[int], slot: Slot) -> dict[int, float]:
        check_position(self._vocabulary, context, slot)
        if slot.type is SlotType.FLAG:
            return {Vocabulary.ORG: self.z_org, Vocabulary.AD: self.z_ad}
        legal = self._vocabulary.legal_tokens(slot)
        values = self.codes.get(slot.level, [0.0] * len(legal))
        return dict(zip(legal, values))


class ShiftedScorer(IScorer):
    """Adds a constant to every logit of one slot of another scorer."""

    def __init__(self, base: IScorer, slot: Slot, shift: float) -> None:
        self.base = base
        self.slot = slot
        self.shift = shift

    @property
    def vocabulary(self) -> Vocabulary:
        return self.base.vocabulary

    def logits(self, context: Sequence[int], slot: Slot) -> dict[int, float]:
        scores = self.base.logits(context, slot)
        if slot != self.slot:
            return scores
        return {token: z + self.shift for token, z in scores.items()}


def make_catalog(codebook_size: int = 3, depth: int = 2) -> dict[int, SemanticId]:
    paths = itertools.product(range(codebook_size), repeat=depth)
    return {i: SemanticId(tuple(codes)) for i, codes in enumerate(paths)}


def make_decoder(
    sid_map: dict[int, SemanticId],
    bids: dict[int, float],
    scorer: Optional[IScorer] = None,
    codebook_size: int = 3,
) -> GemDecoder:
    trie = build_trie(sid_map.items())
    vocabulary = build_vocabulary(sid_map, codebook_size)
    return GemDecoder(
        scorer or RandomTableScorer(vocabulary, seed=3),
        trie,
        build_bid_lookup(trie, bids),
    )


def make_bids(sid_map: dict[int, SemanticId], seed: int = 0) -> dict[int, float]:
    rng = np.random.default_rng(seed)
    return {i: float(rng.uniform(0.1, 1.0)) for i in sid_map}


BOS = (Vocabulary.BOS,)


def test_slot_modulation_is_identity_at_lambda_zero() -> None:
    assert modulate_slot_logits(0.3, -1.2, 0.0, 0.9) == (0.3, -1.2)


def test_slot_modulation_shifts_only_the_ad_logit() -> None:
    assert modulate_slot_logits(0.5, 0.0, 1.0, math.e - 1) == pytest.approx((0.5, 1.0))
    assert modulate_slot_logits(0.5, -2.0, 3.0, 0.0) == (0.5, -2.0)


def test_item_modulation_is_identity_at_lambda_zero() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, make_bids(sid_map))
    scores = {0: -1.0, 1: -0.5, 2: -2.0}

    assert modulate_item_logits(scores, 0.0, decoder.lookup, ()) == scores


def test_item_modulation_matches_hand_computation() -> None:
    sid_map = make_catalog()
    bids = make_bids(sid_map, seed=2)
    decoder = make_decoder(sid_map, bids)
    config = DecodeConfig(lam=1.5)

    base, modulated = decoder.step_logits(BOS, (1,), Mode.SPONSORED, config)

    for code, z in base.items():
        expected_bid = max(bids[i] for i, sid in sid_map.items() if sid.codes[:2] == (1, code))
        assert modulated[code] == pytest.approx(z + 1.5 * math.log1p(expected_bid))


def test_constant_bids_leave_the_ranking_unchanged() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, {i: 0.5 for i in sid_map})

    plain = decoder.beam_search(BOS, Mode.SPONSORED, DecodeConfig(lam=0.0))
    boosted = decoder.beam_search(BOS, Mode.SPONSORED, DecodeConfig(lam=4.0))

    assert [c.item_id for c in plain] == [c.item_id for c in boosted]


def test_shifting_one_slot_leaves_rankings_unchanged() -> None:
    sid_map = make_catalog()
    bids = make_bids(sid_map, seed=6)
    base = make_decoder(sid_map, bids)
    config = DecodeConfig(lam=2.0, beam_width=4)

    for slot in base.scorer.vocabulary.slot_sequence():
        shifted = make_decoder(sid_map, bids, ShiftedScorer(base.scorer, slot, 3.25))
        assert shifted.ad_probability(BOS, config) == pytest.approx(
            base.ad_probability(BOS, config), abs=1e-12
        )
        for flag in (Mode.ORGANIC, Mode.SPONSORED):
            expected = [(c.sid, c.item_id) for c in base.beam_search(BOS, flag, config)]
            ranking = [(c.sid, c.item_id) for c in shifted.beam_search(BOS, flag, config)]
            assert ranking == expected


def test_forced_flags_ignore_the_generator() -> None:
    assert sample_flag(0.0, 5.0, FlagMode.FORCE_ORG, None).flag is Mode.ORGANIC
    assert sample_flag(5.0, 0.0, FlagMode.FORCE_AD, None).flag is Mode.SPONSORED


def test_sampled_flag_needs_a_generator() -> None:
    with pytest.raises(ValueError):
        sample_flag(0.0, 0.0, FlagMode.SAMPLE, None)


def test_large_boost_drives_ad_probability_to_one() -> None:
    z_org, z_ad = modulate_slot_logits(1.0, -1.0, 10.0, 1.0)

    assert sample_flag(z_org, z_ad, FlagMode.FORCE_ORG, None).p_ad > 0.99


def test_equal_logits_give_even_odds() -> None:
    assert sample_flag(0.7, 0.7, FlagMode.FORCE_ORG, None).p_ad == pytest.approx(0.5)


def test_wide_beam_equals_exhaustive_enumeration() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, make_bids(sid_map, seed=5))

    for flag in (Mode.ORGANIC, Mode.SPONSORED):
        for lam in (0.0, 1.0, 5.0):
            config = DecodeConfig(lam=lam, beam_width=9)
            beam = decoder.beam_search(BOS, flag, config)
            oracle = decoder.enumerate_sequences(BOS, flag, config)
            assert beam == oracle
            assert len(beam) == 9


def test_unmodulated_flags_rank_identically() -> None:
    sid_map = make_catalog()
    vocabulary = build_vocabulary(sid_map, 3)
    scorer = ContextFreeScorer(vocabulary, codes={1: [0.2, -0.4, 0.1], 2: [-1.0, 0.3, 0.0]})
    decoder = make_decoder(sid_map, make_bids(sid_map), scorer)
    config = DecodeConfig(lam=0.0)

    organic = decoder.beam_search(BOS, Mode.ORGANIC, config)
    sponsored = decoder.beam_search(BOS, Mode.SPONSORED, config)

    assert organic == sponsored


def test_ties_go_to_the_smaller_path() -> None:
    sid_map = make_catalog()
    vocabulary = build_vocabulary(sid_map, 3)
    decoder = make_decoder(sid_map, make_bids(sid_map), ContextFreeScorer(vocabulary))

    ranking = decoder.beam_search(BOS, Mode.ORGANIC, DecodeConfig(beam_width=9))

    assert [c.sid.path for c in ranking] == sorted(sid.path for sid in sid_map.values())
    greedy = decoder.beam_search(BOS, Mode.ORGANIC, DecodeConfig(beam_width=1))
    assert greedy[0].item_id == 0


def test_forced_organic_is_never_priced() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, make_bids(sid_map))

    result = decoder.decode_next(BOS, DecodeConfig(lam=5.0, flag_mode=FlagMode.FORCE_ORG))

    assert result.flag is Mode.ORGANIC
    assert result.price == 0.0


def test_forced_ad_with_one_eligible_item_pays_its_bid() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, {4: 0.7})

    result = decoder.decode_next(BOS, DecodeConfig(lam=1.0, flag_mode=FlagMode.FORCE_AD))

    assert result.flag is Mode.SPONSORED
    assert result.item_id == 4
    assert result.price == 0.7
    assert result.to_response()["codes"] == list(sid_map[4].codes)


def test_forced_ad_without_eligible_items_fails() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, {})

    with pytest.raises(NoAdAvailableError):
        decoder.decode_next(BOS, DecodeConfig(flag_mode=FlagMode.FORCE_AD))


def test_sampled_allocation_matches_closed_form() -> None:
    sid_map = make_catalog()
    vocabulary = build_vocabulary(sid_map, 3)
    scorer = ContextFreeScorer(vocabulary, z_org=0.0, z_ad=-0.5)
    decoder = make_decoder(sid_map, make_bids(sid_map, seed=9), scorer)
    config = DecodeConfig(lam=1.0)
    winner = decoder.beam_search(BOS, Mode.SPONSORED, config)[0].item_id
    assert winner is not None
    expected = decoder.allocation_probability(winner, BOS, config)
    rng = np.random.default_rng(11)
    n = 10_000

    hits = 0
    for _ in range(n):
        result = decoder.decode_next(BOS, config, rng)
        hits += result.is_ad and result.item_id == winner

    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(hits / n - expected) <= 4 * sigma


def test_allocation_is_zero_for_non_winners() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, make_bids(sid_map))
    config = DecodeConfig(lam=0.0)
    winner = decoder.beam_search(BOS, Mode.SPONSORED, config)[0].item_id
    loser = next(i for i in sid_map if i != winner)

    assert decoder.allocation_probability(loser, BOS, config) == 0.0


def test_top_bid_with_large_lambda_wins_the_slot() -> None:
    sid_map = make_catalog()
    target = 7
    bids = {i: 0.1 for i in sid_map}
    bids[target] = 1.0
    decoder = make_decoder(sid_map, bids)
    config = DecodeConfig(lam=50.0, beam_width=9)

    oracle = decoder.enumerate_sequences(BOS, Mode.SPONSORED, config)

    assert oracle[0].item_id == target
    assert decoder.allocation_probability(target, BOS, config) == pytest.approx(
        decoder.ad_probability(BOS, config)
    )


def test_split_lambdas_override_the_shared_value() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, make_bids(sid_map))

    slot_only = DecodeConfig(lam=3.0, lambda_item=0.0)
    item_only = DecodeConfig(lam=3.0, lambda_slot=0.0)

    assert decoder.ad_probability(BOS, item_only) == decoder.ad_probability(BOS, DecodeConfig())
    assert decoder.beam_search(BOS, Mode.SPONSORED, slot_only) == decoder.beam_search(
        BOS, Mode.SPONSORED, DecodeConfig(lam=0.0)
    )


def test_unconstrained_decoding_can_leave_the_catalog() -> None:
    sid_map = {0: SemanticId((1, 1)), 1: SemanticId((2, 2))}
    vocabulary = build_vocabulary(sid_map, 3)
    decoder = make_decoder(sid_map, {0: 0.5}, ContextFreeScorer(vocabulary))
    config = DecodeConfig(trie_constrained=False, beam_width=9)

    ranking = decoder.beam_search(BOS, Mode.ORGANIC, config)

    assert len(ranking) == 9
    assert ranking[0].sid == SemanticId((0, 0))
    assert ranking[0].item_id is None
    assert {c.item_id for c in ranking} == {None, 0, 1}


def test_rebuilt_lookup_keeps_the_scorer() -> None:
    sid_map = make_catalog()
    decoder = make_decoder(sid_map, make_bids(sid_map))

    shocked = decoder.with_lookup(build_bid_lookup(decoder.trie, {2: 5.0}))

    assert shocked.scorer is decoder.scorer
    assert shocked.lookup.b_max == 5.0


def test_scorer_and_trie_depths_must_agree() -> None:
    sid_map = make_catalog(depth=2)
    other = build_vocabulary(make_catalog(depth=3), 3)

    with pytest.raises(ValidationError):
        make_decoder(sid_map, {}, RandomTableScorer(other, seed=0))
