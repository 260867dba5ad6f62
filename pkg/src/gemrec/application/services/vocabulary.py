"""Unified token streams: flattening trajectories into [flag, codes, disamb] segments."""

from collections.abc import Mapping, Sequence

from gemrec.application.services.semantic_index import SidTrie
from gemrec.domain.exceptions import MissingSemanticIdError, ValidationError
from gemrec.domain.models import Interaction, Mode, SemanticId, Trajectory, Vocabulary

TokenStream = tuple[int, ...]


def build_vocabulary(sid_map: Mapping[int, SemanticId], codebook_size: int) -> Vocabulary:
    """
    Vocabulary sized for a semantic-ID map.

    Raises:
        ValidationError: If the map is empty or a code exceeds the codebook size
    """
    if not sid_map:
        raise ValidationError("Cannot build a vocabulary from an empty semantic-ID map")
    sids = list(sid_map.values())
    depth = sids[0].depth
    if any(s.depth != depth for s in sids):
        raise ValidationError("Semantic IDs have inconsistent depths")
    if any(c >= codebook_size for s in sids for c in s.codes):
        raise ValidationError("Semantic ID code exceeds codebook size", codebook_size=codebook_size)
    n_disamb = max(s.disambiguator for s in sids) + 1
    return Vocabulary(depth=depth, codebook_size=codebook_size, n_disamb=n_disamb)


def segment_tokens(mode: Mode, sid: SemanticId, vocabulary: Vocabulary) -> TokenStream:
    """Tokens of one interaction: [flag, c_1..c_D, disamb]."""
    codes = (vocabulary.code_token(k + 1, c) for k, c in enumerate(sid.codes))
    return (
        vocabulary.flag_token(mode),
        *codes,
        vocabulary.disamb_token(sid.disambiguator),
    )


def context_tokens(
    events: Sequence[Interaction],
    sid_map: Mapping[int, SemanticId],
    vocabulary: Vocabulary,
) -> TokenStream:
    """
    BOS followed by the segments of the given interactions (no EOS).

    Raises:
        MissingSemanticIdError: If an item has no semantic ID
    """
    tokens = [Vocabulary.BOS]
    for event in events:
        sid = sid_map.get(event.item_id)
        if sid is None:
            raise MissingSemanticIdError(
                f"Item {event.item_id} has no semantic ID", item_id=event.item_id
            )
        tokens.extend(segment_tokens(event.mode, sid, vocabulary))
    return tuple(tokens)


def flatten(
    trajectory: Trajectory,
    sid_map: Mapping[int, SemanticId],
    vocabulary: Vocabulary,
) -> TokenStream:
    """
    Flatten a trajectory into BOS, one segment per interaction, EOS.

    Raises:
        MissingSemanticIdError: If an item has no semantic ID
    """
    return (*context_tokens(trajectory.events, sid_map, vocabulary), Vocabulary.EOS)


def split_segments(stream: Sequence[int], vocabulary: Vocabulary) -> list[TokenStream]:
    """
    Cut a BOS..EOS stream into its segments.

    Raises:
        ValidationError: If the stream is not BOS + whole segments + EOS
    """
    if len(stream) < 2 or stream[0] != Vocabulary.BOS or stream[-1] != Vocabulary.EOS:
        raise ValidationError("Token stream must start with BOS and end with EOS")
    body = stream[1:-1]
    size = vocabulary.segment_length
    if len(body) % size:
        raise ValidationError("Token stream is not a whole number of segments", length=len(body))
    return [tuple(body[i : i + size]) for i in range(0, len(body), size)]


def unflatten(
    stream: Sequence[int],
    trie: SidTrie,
    vocabulary: Vocabulary,
    user_id: int = 0,
) -> Trajectory:
    """
    Inverse of flatten: rebuild interactions and resolve items through the trie.

    Raises:
        ValidationError: If a segment is malformed or names no real item
    """
    events = []
    for segment in split_segments(stream, vocabulary):
        try:
            mode = vocabulary.mode_of(segment[0])
            values = [vocabulary.token_value(token) for token in segment[1:]]
        except ValueError as e:
            raise ValidationError(f"Malformed segment: {e}", segment=list(segment)) from e
        expected = vocabulary.slot_sequence()[1:]
        if [slot for slot, _ in values] != expected:
            raise ValidationError("Segment tokens are in the wrong slots", segment=list(segment))
        path = tuple(value for _, value in values)
        item_id = trie.resolve(path)
        if item_id is None:
            raise ValidationError("Segment does not resolve to an item", path=list(path))
        events.append(Interaction(mode, item_id))
    return Trajectory(user_id, tuple(events))
