import math

import numpy as np
import pytest
from scipy.stats import chisquare

from gemrec.application.services.marketplace import (
    MarketplaceSimulator,
    apply_bid_shock,
    assign_bids,
    auction_probabilities,
    auction_sample,
    build_inventory,
    designate_sponsored,
    draw_raw_bids,
    frequency_cap,
    generate_trajectories,
    normalize_bids,
    relevance_filter,
    synth_organic_histories,
)
from gemrec.application.services.semantic_index import disambiguate, prefix_match_depth
from gemrec.domain.exceptions import (
    ConfigurationError,
    EmptyInventoryError,
    NoCandidateError,
    ValidationError,
)
from gemrec.domain.models import Inventory, Mode, OrganicHistory, PolicyParams, SemanticId


def make_inventory(
    n_items: int = 60,
    codebook_size: int = 3,
    depth: int = 3,
    sponsored_fraction: float = 0.5,
    seed: int = 0,
) -> Inventory:
    rng = np.random.default_rng(seed)
    pairs = [
        (i, tuple(int(c) for c in rng.integers(0, codebook_size, size=depth)))
        for i in range(n_items)
    ]
    sid_map = disambiguate(pairs)
    sponsored = designate_sponsored(sorted(sid_map), sponsored_fraction, rng)
    return assign_bids(build_inventory(sid_map, sponsored), seed=seed)


def test_designated_subset_has_rounded_size() -> None:
    chosen = designate_sponsored(list(range(1000)), 0.2, np.random.default_rng(0))

    assert len(chosen) == 200
    assert chosen <= set(range(1000))


def test_designation_rejects_bad_fraction() -> None:
    with pytest.raises(ConfigurationError):
        designate_sponsored([1, 2, 3], 1.5, np.random.default_rng(0))


def test_bids_lie_in_normalized_range() -> None:
    inventory = make_inventory(n_items=200)

    bids = list(inventory.bids.values())

    assert len(bids) == len(inventory.sponsored_ids)
    assert min(bids) == pytest.approx(0.1)
    assert max(bids) == pytest.approx(1.0)
    assert all(0.1 <= b <= 1.0 for b in bids)


def test_single_sponsored_item_bids_the_floor() -> None:
    sid_map = {0: SemanticId((0,)), 1: SemanticId((1,))}

    inventory = assign_bids(build_inventory(sid_map, {1}), seed=4)

    assert inventory.bids == {1: 0.1}


def test_organic_items_carry_no_bid() -> None:
    inventory = make_inventory()

    for item in inventory.items:
        assert (item.bid is not None) == item.sponsored


def test_no_sponsored_items_is_an_empty_inventory() -> None:
    sid_map = {0: SemanticId((0,)), 1: SemanticId((1,))}

    with pytest.raises(EmptyInventoryError):
        assign_bids(build_inventory(sid_map, set()))


def test_raw_bid_median_is_near_one() -> None:
    raw = draw_raw_bids(10_000, 0.0, 0.2, np.random.default_rng(1))

    assert abs(float(np.median(raw)) - 1.0) < 0.02


def test_normalization_clips_the_extreme_tail() -> None:
    raw = np.concatenate([np.linspace(1.0, 2.0, 999), [1000.0]])

    normalized = normalize_bids(raw)

    assert normalized.max() == pytest.approx(1.0)
    assert normalized[-1] == pytest.approx(1.0)
    assert normalized[-2] > 0.5


def test_no_prefix_overlap_gives_no_candidates() -> None:
    sid_map = {0: SemanticId((0, 0)), 1: SemanticId((1, 0))}
    inventory = build_inventory(sid_map, {1}, {1: 0.5})

    assert relevance_filter(SemanticId((0, 1)), inventory, d=2) == []


def test_identical_codes_match_at_any_depth() -> None:
    sid_map = {0: SemanticId((2, 1, 0)), 1: SemanticId((2, 1, 0), 1)}
    inventory = build_inventory(sid_map, {1}, {1: 0.5})

    for d in (1, 2, 3):
        assert relevance_filter(sid_map[0], inventory, d=d, exclude=0) == [1]


def test_relevance_filter_matches_linear_scan() -> None:
    inventory = make_inventory(n_items=150, codebook_size=2, seed=3)
    eligible = [it for it in inventory.items if it.bid is not None]

    for target in inventory.items[:30]:
        expected = [
            it.item_id
            for it in eligible
            if it.item_id != target.item_id and prefix_match_depth(it.sid, target.sid) >= 2
        ]
        found = relevance_filter(target.sid, inventory, d=2, exclude=target.item_id)
        if expected:
            assert found == expected
        else:
            assert all(
                prefix_match_depth(inventory.get(i).sid, target.sid) == 1 for i in found
            )


def test_single_candidate_always_wins() -> None:
    rng = np.random.default_rng(0)

    winners = {auction_sample([4], {4: 0.3}, 0.1, rng) for _ in range(100)}

    assert winners == {4}


def test_high_bidder_wins_at_softmax_rate() -> None:
    bids = {0: 1.0, 1: 0.1}
    expected = 1.0 / (1.0 + math.exp(-9.0))
    rng = np.random.default_rng(2)

    wins = sum(auction_sample([0, 1], bids, 0.1, rng) == 0 for _ in range(100_000))

    assert auction_probabilities([1.0, 0.1], 0.1)[0] == pytest.approx(0.999877, abs=1e-6)
    assert abs(wins / 100_000 - expected) <= 0.001


def test_equal_bids_select_uniformly() -> None:
    bids = {i: 0.5 for i in range(4)}
    rng = np.random.default_rng(3)

    draws = [auction_sample(list(range(4)), bids, 0.1, rng) for _ in range(10_000)]

    _, p_value = chisquare(np.bincount(draws, minlength=4))
    assert p_value > 0.01


def test_empty_auction_has_no_candidate() -> None:
    with pytest.raises(NoCandidateError):
        auction_sample([], {}, 0.1, np.random.default_rng(0))


def test_frequency_cap_recovery() -> None:
    assert frequency_cap(20, 0.4, 0.05) == pytest.approx(0.4)
    assert frequency_cap(1, 0.4, 0.05) == pytest.approx(0.02)
    assert frequency_cap(0, 0.4, 0.05) == 0.0
    assert frequency_cap(math.inf, 0.4, 0.05) == pytest.approx(0.4)


def test_frequency_cap_rejects_negative_gap() -> None:
    with pytest.raises(ValidationError):
        frequency_cap(-1, 0.4, 0.05)


def test_zero_acceptance_reproduces_organic_logs() -> None:
    inventory = make_inventory()
    histories = synth_organic_histories(30, (3, 8), inventory, seed=1)

    result = generate_trajectories(histories, inventory, PolicyParams(accept_rate=0.0), seed=1)

    assert result.ad_fraction == 0.0
    for history, trajectory in zip(histories, result.trajectories):
        assert tuple(ev.item_id for ev in trajectory.events) == history.item_ids


def test_ads_precede_their_organic_anchor() -> None:
    inventory = make_inventory()
    histories = synth_organic_histories(50, (5, 15), inventory, seed=2)
    params = PolicyParams(accept_rate=1.0, recovery_rate=0.5)

    result = generate_trajectories(histories, inventory, params, seed=2)

    assert result.n_ads > 0
    for history, trajectory in zip(histories, result.trajectories):
        organic = tuple(ev.item_id for ev in trajectory.events if ev.mode is Mode.ORGANIC)
        assert organic == history.item_ids
        assert trajectory.events[-1].mode is Mode.ORGANIC
        modes = [ev.mode for ev in trajectory.events]
        assert all(
            not (a is Mode.SPONSORED and b is Mode.SPONSORED) for a, b in zip(modes, modes[1:])
        )


def test_displayed_ads_are_sponsored_items() -> None:
    inventory = make_inventory()
    simulator = MarketplaceSimulator(inventory, PolicyParams(accept_rate=1.0, recovery_rate=1.0))
    history = OrganicHistory(0, tuple(inventory.items[i].item_id for i in range(10)))

    trajectory = simulator.replay(history, seed=0)

    for ev in trajectory.events:
        if ev.mode is Mode.SPONSORED:
            assert inventory.get(ev.item_id).sponsored


def test_generation_is_seeded() -> None:
    inventory = make_inventory()
    histories = synth_organic_histories(20, (3, 6), inventory, seed=5)
    params = PolicyParams(accept_rate=1.0, recovery_rate=0.5)

    first = generate_trajectories(histories, inventory, params, seed=5)
    second = generate_trajectories(histories, inventory, params, seed=5)

    assert first.trajectories == second.trajectories


def test_prefix_depth_beyond_code_depth_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        MarketplaceSimulator(make_inventory(depth=2), PolicyParams(prefix_depth=3))


def test_unit_multiplier_leaves_bids_unchanged() -> None:
    inventory = make_inventory()

    shocked = apply_bid_shock(inventory, fraction=0.5, multiplier=1.0, seed=0)

    assert shocked.inventory.bids == inventory.bids


def test_full_shock_scales_every_bid() -> None:
    inventory = make_inventory()

    shocked = apply_bid_shock(inventory, fraction=1.0, multiplier=10.0, seed=0)

    assert shocked.shocked == frozenset(inventory.bids)
    for item_id, bid in inventory.bids.items():
        assert shocked.inventory.bids[item_id] == pytest.approx(10 * bid)


def test_shock_size_is_the_ceiling_of_the_fraction() -> None:
    sid_map = {i: SemanticId((i % 7, i // 7)) for i in range(1000)}
    inventory = assign_bids(build_inventory(sid_map, set(sid_map)), seed=0)

    shocked = apply_bid_shock(inventory, fraction=0.05, multiplier=10.0, seed=1)

    assert len(shocked.shocked) == 50
    assert inventory.bids[min(shocked.shocked)] != shocked.inventory.bids[min(shocked.shocked)]


def test_shock_rejects_bad_fraction() -> None:
    with pytest.raises(ConfigurationError):
        apply_bid_shock(make_inventory(), fraction=0.0)


def test_unit_length_histories() -> None:
    histories = synth_organic_histories(10, (1, 1), make_inventory(), seed=0)

    assert all(len(h.item_ids) == 1 for h in histories)


def test_zero_users_gives_no_histories() -> None:
    assert synth_organic_histories(0, (1, 5), make_inventory(), seed=0) == []


def test_histories_stay_inside_a_category() -> None:
    inventory = make_inventory(n_items=200, codebook_size=4, seed=6)
    histories = synth_organic_histories(100, (5, 20), inventory, category_bias=0.9, seed=6)

    same = total = 0
    for history in histories:
        for a, b in zip(history.item_ids, history.item_ids[1:]):
            total += 1
            same += inventory.get(a).sid.codes[0] == inventory.get(b).sid.codes[0]

    assert same / total >= 0.7


def test_fully_local_walks_stay_in_the_previous_neighbourhood() -> None:
    inventory = make_inventory(n_items=120, seed=7)
    histories = synth_organic_histories(40, (4, 10), inventory, seed=7, locality=1.0)

    for history in histories:
        for a, b in zip(history.item_ids, history.item_ids[1:]):
            assert inventory.get(a).sid.codes[:2] == inventory.get(b).sid.codes[:2]


def test_walk_locality_must_be_a_probability() -> None:
    with pytest.raises(ConfigurationError):
        synth_organic_histories(3, (1, 5), make_inventory(), locality=1.5)


def steady_state_ad_fraction(p: float, r: float, horizon: int = 10_000) -> float:
    """Share of ads among logged events once the frequency cap has settled."""
    survival = 1.0
    mean_gap = 1.0
    for gap in range(1, horizon):
        survival *= 1.0 - frequency_cap(gap, p, r)
        mean_gap += survival
    ads_per_organic = 1.0 / mean_gap
    return ads_per_organic / (1.0 + ads_per_organic)


def test_steady_state_ad_fractions_of_the_presets() -> None:
    assert steady_state_ad_fraction(0.4, 0.05) == pytest.approx(0.1048, abs=5e-4)
    assert steady_state_ad_fraction(1.0, 0.5) == pytest.approx(0.4, abs=1e-9)


@pytest.mark.parametrize("p, r", [(0.4, 0.05), (1.0, 0.5)])
def test_long_histories_log_the_steady_state_ad_fraction(p: float, r: float) -> None:
    inventory = make_inventory()
    histories = synth_organic_histories(300, (200, 200), inventory, seed=8)

    result = generate_trajectories(
        histories, inventory, PolicyParams(accept_rate=p, recovery_rate=r), seed=8
    )

    assert result.ad_fraction == pytest.approx(steady_state_ad_fraction(p, r), abs=0.01)
