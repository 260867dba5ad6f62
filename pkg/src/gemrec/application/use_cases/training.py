"""Training use case - fits the unified scorer and the organic-only baseline."""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

from gemrec.application.services.scorer import BackoffScorer, corpus_nll, train_scorer
from gemrec.application.services.vocabulary import build_vocabulary, flatten
from gemrec.domain.exceptions import ValidationError
from gemrec.domain.models import Mode, SemanticId, Trajectory
from gemrec.domain.repositories import IMarketplaceRepository, IModelRepository
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

MAIN_MODEL = "model"
BASELINE_MODEL = "baseline"


def training_view(trajectory: Trajectory) -> Trajectory:
    """Training view of a trajectory: everything before its held-out interaction."""
    history, _ = trajectory.split_holdout()
    return history


def heldout_nll(
    model: BackoffScorer,
    trajectories: Sequence[Trajectory],
    sid_map: dict[int, SemanticId],
) -> float:
    """Mean per-token NLL of each user's held-out segment given the history before it."""
    vocabulary = model.vocabulary
    streams = []
    starts = []
    for trajectory in trajectories:
        history, truth = trajectory.split_holdout()
        if truth is None:
            continue
        scored = Trajectory(trajectory.user_id, (*history.events, truth))
        streams.append(flatten(scored, sid_map, vocabulary))
        starts.append(1 + len(history) * vocabulary.segment_length)
    return corpus_nll(model, streams, starts)


@dataclass(frozen=True)
class TrainingSummary:
    """Training corpus size and likelihood diagnostics."""

    n_streams: int
    n_contexts: int
    train_nll: float
    heldout_nll: float
    baseline_heldout_nll: float
    train_ad_fraction: float


class ScorerTrainer:
    """Trains and persists the scorers on everything before each held-out interaction."""

    def __init__(
        self,
        marketplace_repository: IMarketplaceRepository,
        model_repository: IModelRepository,
        codebook_size: int,
        order: int = 4,
        alpha: float = 0.1,
    ) -> None:
        """
        Initialize trainer.

        Args:
            marketplace_repository: Source of semantic IDs and trajectories
            model_repository: Destination of the model files
            codebook_size: Codebook size C of the semantic IDs
            order: Back-off context length m
            alpha: Smoothing constant
        """
        self.marketplace_repository = marketplace_repository
        self.model_repository = model_repository
        self.codebook_size = codebook_size
        self.order = order
        self.alpha = alpha

    def execute(self, trajectories: Optional[Sequence[Trajectory]] = None) -> TrainingSummary:
        """
        Train the unified scorer and the ad-free baseline, then save both.

        Args:
            trajectories: Logged trajectories; loaded from the repository when omitted

        Returns:
            TrainingSummary with training and held-out NLL

        Raises:
            ValidationError: If there are no trajectories to train on
        """
        sid_map = self.marketplace_repository.load_semantic_ids()
        if trajectories is None:
            trajectories = self.marketplace_repository.load_trajectories()
        if not trajectories:
            raise ValidationError("No trajectories to train on")

        vocabulary = build_vocabulary(sid_map, self.codebook_size)
        training = [training_view(t) for t in trajectories]
        train_streams = [flatten(t, sid_map, vocabulary) for t in training]
        model = train_scorer(train_streams, vocabulary, order=self.order, alpha=self.alpha)
        baseline = train_scorer(
            [flatten(t.without_ads(), sid_map, vocabulary) for t in training],
            vocabulary,
            order=self.order,
            alpha=self.alpha,
        )

        train_nll = corpus_nll(model, train_streams, [1] * len(train_streams))
        train_events = [ev for t in training for ev in t.events]
        n_ads = sum(1 for ev in train_events if ev.mode is Mode.SPONSORED)

        summary = TrainingSummary(
            n_streams=len(train_streams),
            n_contexts=len(model.counts),
            train_nll=train_nll,
            heldout_nll=heldout_nll(model, trajectories, sid_map),
            baseline_heldout_nll=heldout_nll(baseline, trajectories, sid_map),
            train_ad_fraction=n_ads / len(train_events) if train_events else 0.0,
        )

        self.model_repository.save_model(model.to_document(), MAIN_MODEL)
        self.model_repository.save_model(baseline.to_document(), BASELINE_MODEL)

        if math.isnan(summary.heldout_nll):
            logger.warning("Held-out NLL undefined: no user has a held-out interaction")
        logger.info(
            "Training completed",
            streams=summary.n_streams,
            contexts=summary.n_contexts,
            train_nll=summary.train_nll,
            heldout_nll=summary.heldout_nll,
        )
        return summary
