import math

from hypothesis import given, settings
from hypothesis import strategies as st

from gemrec.application.services.bid_lookup import build_bid_lookup
from gemrec.application.services.marketplace import frequency_cap
from gemrec.application.services.metrics import ndcg_at_k
from gemrec.application.services.semantic_index import build_trie, disambiguate

code_tuples = st.lists(
    st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40
)


@given(code_tuples)
def test_disambiguated_ids_are_unique(codes: list[tuple[int, int]]) -> None:
    sid_map = disambiguate(enumerate(codes))

    paths = [sid.path for sid in sid_map.values()]

    assert len(set(paths)) == len(codes)
    assert len(build_trie(sid_map.items())) == len(codes)


@settings(max_examples=50)
@given(code_tuples, st.data())
def test_prefix_bids_never_grow_with_depth(
    codes: list[tuple[int, int]], data: st.DataObject
) -> None:
    sid_map = disambiguate(enumerate(codes))
    trie = build_trie(sid_map.items())
    bids = {
        i: data.draw(st.floats(0.1, 1.0)) for i in sid_map if data.draw(st.booleans())
    }

    lookup = build_bid_lookup(trie, bids)

    for sid in sid_map.values():
        path = sid.path
        for k in range(len(path)):
            longer = lookup.bid(path[: k + 1])
            if longer is not None:
                shorter = lookup.bid(path[:k])
                assert shorter is not None and shorter >= longer


@given(st.lists(st.integers(0, 1), max_size=20), st.integers(1, 20))
def test_ndcg_is_a_fraction(hits: list[int], k: int) -> None:
    assert 0.0 <= ndcg_at_k(hits, k) <= 1.0


@given(
    st.one_of(st.integers(0, 100).map(float), st.just(math.inf)),
    st.floats(0.0, 1.0),
    st.floats(0.001, 1.0),
)
def test_frequency_cap_stays_below_base_rate(delta_t: float, p: float, r: float) -> None:
    value = frequency_cap(delta_t, p, r)

    assert 0.0 <= value <= p
