"""Data generation use case - catalog, semantic IDs, bids and logged trajectories."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from gemrec.application.services.marketplace import (
    assign_bids,
    build_inventory,
    designate_sponsored,
    generate_trajectories,
    synth_organic_histories,
)
from gemrec.application.services.seeding import derive_seed
from gemrec.application.services.semantic_index import (
    assign_semantic_ids,
    fit_residual_quantizer,
    quantization_error,
    synth_embeddings,
)
from gemrec.domain.models import Progress
from gemrec.domain.repositories import IMarketplaceRepository
from gemrec.infrastructure.config import RunConfig
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class DataGenerationSummary:
    """What a data-generation run produced."""

    n_items: int
    n_sponsored: int
    n_users: int
    n_events: int
    n_ads: int
    ad_fraction: float
    quantization_error: float
    max_disambiguator: int


class DataGenerator:
    """
    Runs the synthetic marketplace pipeline end to end.

    embeddings -> residual codebooks -> semantic IDs -> sponsored subset and
    bids -> organic histories -> two-stage ad policy -> persisted logs.
    """

    PHASES = ("embeddings", "codebooks", "inventory", "histories", "trajectories", "persist")

    def __init__(
        self,
        config: RunConfig,
        marketplace_repository: IMarketplaceRepository,
        progress_callback: Optional[Callable[[Progress], None]] = None,
    ) -> None:
        """
        Initialize data generator.

        Args:
            config: Resolved run configuration
            marketplace_repository: Where items, IDs, bids and trajectories go
            progress_callback: Optional callback for progress updates
        """
        self.config = config
        self.marketplace_repository = marketplace_repository
        self.progress_callback = progress_callback

    def _report(self, phase: str) -> None:
        if self.progress_callback:
            completed = self.PHASES.index(phase) + 1
            self.progress_callback(Progress(phase, completed, len(self.PHASES)))

    def execute(self) -> DataGenerationSummary:
        """
        Generate and persist the synthetic marketplace.

        Returns:
            Summary with the realized training ad fraction
        """
        cfg = self.config
        logger.info("Starting data generation", seed=cfg.seed, preset=cfg.preset)

        corpus = synth_embeddings(
            n_items=cfg.n_items,
            dim=cfg.embedding_dim,
            n_categories=cfg.n_categories,
            n_subcategories=cfg.n_subcategories,
            category_scale=cfg.category_scale,
            subcategory_scale=cfg.subcategory_scale,
            noise_scale=cfg.noise_scale,
            seed=derive_seed(cfg.seed, "embeddings"),
        )
        self._report("embeddings")

        codebooks = fit_residual_quantizer(
            corpus.embeddings,
            depth=cfg.depth,
            codebook_size=cfg.codebook_size,
            iterations=cfg.kmeans_iterations,
            seed=derive_seed(cfg.seed, "codebooks"),
            n_init=cfg.kmeans_restarts,
        )
        sid_map = assign_semantic_ids(corpus.embeddings, codebooks)
        error = quantization_error(corpus.embeddings, codebooks)
        self._report("codebooks")

        sponsored = designate_sponsored(
            sorted(sid_map),
            cfg.sponsored_fraction,
            np.random.default_rng(derive_seed(cfg.seed, "sponsored")),
        )
        inventory = assign_bids(
            build_inventory(sid_map, sponsored),
            mu=cfg.mu,
            sigma=cfg.sigma,
            seed=derive_seed(cfg.seed, "bids"),
        )
        self._report("inventory")

        histories = synth_organic_histories(
            cfg.n_users,
            (cfg.history_min, cfg.history_max),
            inventory,
            category_bias=cfg.category_bias,
            seed=derive_seed(cfg.seed, "histories"),
            locality=cfg.walk_locality,
        )
        self._report("histories")

        generated = generate_trajectories(
            histories, inventory, cfg.policy_params(), seed=derive_seed(cfg.seed, "policy")
        )
        self._report("trajectories")

        self.marketplace_repository.save_items(corpus.embeddings, sponsored)
        self.marketplace_repository.save_semantic_ids(sid_map)
        self.marketplace_repository.save_bids(inventory.bids)
        self.marketplace_repository.save_trajectories(generated.trajectories)
        self._report("persist")

        summary = DataGenerationSummary(
            n_items=len(sid_map),
            n_sponsored=len(sponsored),
            n_users=len(generated.trajectories),
            n_events=generated.n_events,
            n_ads=generated.n_ads,
            ad_fraction=generated.ad_fraction,
            quantization_error=error,
            max_disambiguator=max(s.disambiguator for s in sid_map.values()),
        )
        logger.info(
            "Data generation completed",
            n_items=summary.n_items,
            n_events=summary.n_events,
            ad_fraction=round(summary.ad_fraction, 4),
        )
        return summary
