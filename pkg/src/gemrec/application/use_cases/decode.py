"""Single-request decoding use case."""

from collections.abc import Sequence
from dataclasses import replace
from typing import Any

import numpy as np

from gemrec.application.services.decoder import GemDecoder
from gemrec.domain.exceptions import ValidationError
from gemrec.domain.models import DecodeConfig, DecodeResult, FlagMode, Vocabulary

REQUEST_KEYS = frozenset({"context", "lambda", "beam", "flag_mode", "seed"})


def validate_context(context: Sequence[int], vocabulary: Vocabulary) -> tuple[int, ...]:
    """
    Check that a context is BOS followed by whole, well-formed segments.

    Raises:
        ValidationError: On a malformed context
    """
    tokens = tuple(context)
    if not tokens or tokens[0] != Vocabulary.BOS:
        raise ValidationError("Context must start with BOS", context=list(tokens[:8]))
    if (len(tokens) - 1) % vocabulary.segment_length:
        raise ValidationError(
            "Context must end on a segment boundary",
            length=len(tokens),
            segment_length=vocabulary.segment_length,
        )
    for position in range(1, len(tokens)):
        expected = vocabulary.slot_after(position)
        try:
            slot, _ = vocabulary.token_value(tokens[position])
        except ValueError as e:
            raise ValidationError(f"Invalid context token: {e}", position=position) from e
        if slot != expected:
            raise ValidationError(
                "Context token is in the wrong slot",
                position=position,
                token=tokens[position],
                expected=expected.type.value,
            )
    return tokens


def parse_request(
    document: dict[str, Any], vocabulary: Vocabulary, defaults: DecodeConfig
) -> tuple[tuple[int, ...], DecodeConfig]:
    """
    Parse a decode request document.

    Request keys: context (token ids, required), lambda, beam, flag_mode, seed.
    Missing keys fall back to `defaults`.

    Raises:
        ValidationError: On unknown keys, a missing or malformed context, or bad values
    """
    if not isinstance(document, dict):
        raise ValidationError("Decode request must be a JSON object")
    unknown = sorted(set(document) - REQUEST_KEYS)
    if unknown:
        raise ValidationError("Unknown decode request keys", keys=unknown)
    if "context" not in document or not isinstance(document["context"], list):
        raise ValidationError("Decode request needs a 'context' list of token ids")

    try:
        context = validate_context([int(t) for t in document["context"]], vocabulary)
        config = replace(
            defaults,
            lam=float(document.get("lambda", defaults.lam)),
            beam_width=int(document.get("beam", defaults.beam_width)),
            flag_mode=FlagMode.from_string(
                str(document.get("flag_mode", defaults.flag_mode.value))
            ),
            seed=int(document.get("seed", defaults.seed)),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Invalid decode request: {e}") from e
    return context, config


def decode_request(
    decoder: GemDecoder, document: dict[str, Any], defaults: DecodeConfig
) -> DecodeResult:
    """Parse and serve one decode request; the flag draw uses the request seed."""
    context, config = parse_request(document, decoder.vocabulary, defaults)
    rng = np.random.default_rng(config.seed) if config.flag_mode is FlagMode.SAMPLE else None
    return decoder.decode_next(context, config, rng)

