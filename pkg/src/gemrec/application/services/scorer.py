"""Autoregressive scorers: the additive-smoothed back-off count model and a seeded random table."""

import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np
from scipy.special import log_softmax

from gemrec.domain.exceptions import ConfigurationError, PositionError, ValidationError
from gemrec.domain.models import MODEL_FORMAT, Slot, Vocabulary
from gemrec.domain.services import IScorer
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

Context = tuple[int, ...]


def check_position(vocabulary: Vocabulary, context: Sequence[int], slot: Slot) -> None:
    """
    Verify a context starts with BOS and ends right before `slot`.

    Raises:
        PositionError: On a malformed or misaligned context
    """
    if not context or context[0] != Vocabulary.BOS:
        raise PositionError("Context must start with BOS", length=len(context))
    expected = vocabulary.slot_after(len(context))
    if expected != slot:
        raise PositionError(
            "Context position does not match the requested slot",
            expected=f"{expected.type.value}{expected.level or ''}",
            requested=f"{slot.type.value}{slot.level or ''}",
            length=len(context),
        )


class BackoffScorer(IScorer):
    """
    Order-m count model with additive smoothing over slot-legal tokens.

    P(token | ctx) = (count + alpha) / (total + alpha * |legal|) at the longest
    context suffix whose legal-token total is nonzero; uniform if none is.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        order: int,
        alpha: float,
        counts: dict[Context, dict[int, int]],
    ) -> None:
        """
        Initialize scorer from count tables.

        Args:
            vocabulary: Token vocabulary
            order: Maximum context length m
            alpha: Smoothing constant (> 0)
            counts: Mapping context suffix -> next-token counts

        Raises:
            ConfigurationError: If order < 0 or alpha <= 0
        """
        if order < 0:
            raise ConfigurationError("Scorer order must be >= 0", order=order)
        if not alpha > 0:
            raise ConfigurationError("Smoothing alpha must be > 0", alpha=alpha)
        self._vocabulary = vocabulary
        self.order = order
        self.alpha = alpha
        self.counts = counts
        self._cache: dict[tuple[Context, Slot], dict[int, float]] = {}

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def _suffix(self, context: Sequence[int]) -> Context:
        keep = min(self.order, len(context))
        return tuple(context[len(context) - keep :])

    def distribution(self, context: Sequence[int], slot: Slot) -> dict[int, float]:
        """Smoothed probabilities over the legal tokens of slot."""
        return {token: math.exp(lp) for token, lp in self.logits(context, slot).items()}

    def logits(self, context: Sequence[int], slot: Slot) -> dict[int, float]:
        """Log-probabilities over the legal tokens of slot."""
        check_position(self._vocabulary, context, slot)
        suffix = self._suffix(context)
        key = (suffix, slot)
        cached = self._cache.get(key)
        if cached is not None:
            return dict(cached)

        legal = self._vocabulary.legal_tokens(slot)
        table: dict[int, int] = {}
        total = 0
        for j in range(len(suffix), -1, -1):
            candidate = self.counts.get(suffix[len(suffix) - j :])
            if candidate:
                total = sum(candidate.get(token, 0) for token in legal)
                if total > 0:
                    table = candidate
                    break

        denominator = total + self.alpha * len(legal)
        scores = {
            token: math.log((table.get(token, 0) + self.alpha) / denominator) for token in legal
        }
        self._cache[key] = scores
        return dict(scores)

    def to_document(self) -> dict[str, Any]:
        """Serialize to a deterministic, self-describing document."""
        tables = [
            {"context": list(context), "counts": sorted([t, n] for t, n in next_counts.items())}
            for context, next_counts in sorted(self.counts.items())
        ]
        return {
            "format": MODEL_FORMAT,
            "vocabulary": self._vocabulary.to_dict(),
            "order": self.order,
            "alpha": self.alpha,
            "tables": tables,
        }

    @classmethod
    def from_document(cls, document: dict[str, Any]) -> "BackoffScorer":
        """
        Rebuild a scorer from `to_document` output.

        Raises:
            ValidationError: If the document is malformed or has the wrong header
        """
        if document.get("format") != MODEL_FORMAT:
            raise ValidationError(
                "Unsupported model format", found=document.get("format"), expected=MODEL_FORMAT
            )
        try:
            vocabulary = Vocabulary(**document["vocabulary"])
            counts = {
                tuple(entry["context"]): {int(t): int(n) for t, n in entry["counts"]}
                for entry in document["tables"]
            }
            return cls(vocabulary, int(document["order"]), float(document["alpha"]), counts)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed model document: {e}") from e


def train_scorer(
    corpus: Iterable[Sequence[int]],
    vocabulary: Vocabulary,
    order: int = 4,
    alpha: float = 0.1,
) -> BackoffScorer:
    """
    Count next-token occurrences for every context suffix of length 0..m.

    Each stream is BOS .. EOS and independent; EOS is never a prediction
    target and contexts never cross streams.

    Args:
        corpus: Token streams
        vocabulary: Token vocabulary
        order: Maximum context length m
        alpha: Smoothing constant

    Returns:
        Trained BackoffScorer
    """
    counts: dict[Context, Counter[int]] = defaultdict(Counter)
    n_streams = 0
    n_tokens = 0
    for stream in corpus:
        n_streams += 1
        tokens = tuple(stream)
        for t in range(1, len(tokens)):
            token = tokens[t]
            if token == Vocabulary.EOS:
                continue
            n_tokens += 1
            for j in range(min(order, t) + 1):
                counts[tokens[t - j : t]][token] += 1

    if n_streams == 0:
        logger.warning("Training scorer on an empty corpus; model is uniform")
    logger.info(
        "Trained back-off scorer",
        streams=n_streams,
        tokens=n_tokens,
        contexts=len(counts),
        order=order,
        alpha=alpha,
    )
    return BackoffScorer(
        vocabulary, order, alpha, {ctx: dict(sorted(c.items())) for ctx, c in counts.items()}
    )


def sequence_nll(model: IScorer, stream: Sequence[int], start: int = 1) -> float:
    """
    Mean negative log-likelihood per scored token.

    Scores every non-EOS token from index `start` on, conditioned on the full
    prefix before it.

    Raises:
        ValidationError: If no token is scored
    """
    vocabulary = model.vocabulary
    total = 0.0
    n_scored = 0
    for t in range(max(start, 1), len(stream)):
        token = stream[t]
        if token == Vocabulary.EOS:
            continue
        context = stream[:t]
        scores = model.logits(context, vocabulary.slot_after(len(context)))
        if token not in scores:
            raise ValidationError("Token is not legal at its position", index=t, token=token)
        total -= scores[token]
        n_scored += 1
    if n_scored == 0:
        raise ValidationError("Stream has no scorable tokens", length=len(stream))
    return total / n_scored


def corpus_nll(model: IScorer, streams: Iterable[Sequence[int]], starts: Iterable[int]) -> float:
    """Token-weighted mean NLL over several streams, each scored from its own start."""
    vocabulary = model.vocabulary
    total = 0.0
    n_scored = 0
    for stream, start in zip(streams, starts):
        for t in range(max(start, 1), len(stream)):
            if stream[t] == Vocabulary.EOS:
                continue
            context = stream[:t]
            total -= model.logits(context, vocabulary.slot_after(len(context)))[stream[t]]
            n_scored += 1
    return total / n_scored if n_scored else math.nan


class RandomTableScorer(IScorer):
    """
    Seeded random conditionals, one table per context suffix.

    Used to build toy decoding instances: any context maps to a fixed
    pseudo-random distribution over the legal tokens.
    """

    def __init__(
        self, vocabulary: Vocabulary, seed: int, scale: float = 2.0, order: int = 16
    ) -> None:
        self._vocabulary = vocabulary
        self.seed = seed
        self.scale = scale
        self.order = order
        self._cache: dict[tuple[Context, Slot], dict[int, float]] = {}

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def logits(self, context: Sequence[int], slot: Slot) -> dict[int, float]:
        check_position(self._vocabulary, context, slot)
        suffix = tuple(context[max(0, len(context) - self.order) :])
        key = ((len(context), *suffix), slot)
        cached = self._cache.get(key)
        if cached is None:
            rng = np.random.default_rng([self.seed, len(context), *suffix])
            legal = self._vocabulary.legal_tokens(slot)
            raw = rng.normal(0.0, self.scale, size=len(legal))
            cached = {token: float(v) for token, v in zip(legal, log_softmax(raw))}
            self._cache[key] = cached
        return dict(cached)
