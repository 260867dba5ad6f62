"""Dependency injection container using Factory pattern."""

from typing import Callable, Optional

from gemrec.application.services.bid_lookup import BidLookup, build_bid_lookup
from gemrec.application.services.decoder import GemDecoder
from gemrec.application.services.marketplace import build_inventory
from gemrec.application.services.scorer import BackoffScorer
from gemrec.application.services.seeding import derive_seed
from gemrec.application.services.semantic_index import SidTrie, build_trie
from gemrec.application.services.vocabulary import build_vocabulary
from gemrec.application.use_cases.audit import AuditSuite, TrainedArtifacts
from gemrec.application.use_cases.data_generation import DataGenerator
from gemrec.application.use_cases.evaluation import Evaluator, build_eval_cases
from gemrec.application.use_cases.training import BASELINE_MODEL, MAIN_MODEL, ScorerTrainer
from gemrec.domain.exceptions import ArtifactError
from gemrec.domain.models import EvalCase, Inventory, Progress, SemanticId, Trajectory
from gemrec.infrastructure.config import RunConfig
from gemrec.infrastructure.repositories import (
    FileModelRepository,
    FileReportRepository,
    JsonlMarketplaceRepository,
)


class Container:
    """
    Dependency injection container.

    Every dependency is created on first access; artifacts are loaded once.
    """

    def __init__(
        self,
        config: RunConfig,
        progress_callback: Optional[Callable[[Progress], None]] = None,
    ) -> None:
        """
        Initialize container with configuration.

        Args:
            config: Resolved run configuration
            progress_callback: Optional progress callback handed to use cases
        """
        self.config = config
        self.progress_callback = progress_callback

        # Ensure output directories exist
        self.config.ensure_out_dir()

        # Repositories
        self._marketplace_repository: Optional[JsonlMarketplaceRepository] = None
        self._model_repository: Optional[FileModelRepository] = None
        self._report_repository: Optional[FileReportRepository] = None

        # Loaded artifacts
        self._sid_map: Optional[dict[int, SemanticId]] = None
        self._trajectories: Optional[list[Trajectory]] = None
        self._trie: Optional[SidTrie] = None
        self._inventory: Optional[Inventory] = None
        self._scorer: Optional[BackoffScorer] = None
        self._baseline_scorer: Optional[BackoffScorer] = None
        self._lookup: Optional[BidLookup] = None
        self._eval_cases: Optional[list[EvalCase]] = None
        self._baseline_cases: Optional[list[EvalCase]] = None

    @property
    def marketplace_repository(self) -> JsonlMarketplaceRepository:
        """Get or create marketplace repository."""
        if self._marketplace_repository is None:
            self._marketplace_repository = JsonlMarketplaceRepository(self.config.data_dir)
        return self._marketplace_repository

    @property
    def model_repository(self) -> FileModelRepository:
        """Get or create model repository."""
        if self._model_repository is None:
            self._model_repository = FileModelRepository(self.config.model_dir)
        return self._model_repository

    @property
    def report_repository(self) -> FileReportRepository:
        """Get or create report repository."""
        if self._report_repository is None:
            self._report_repository = FileReportRepository(self.config.report_dir)
        return self._report_repository

    @property
    def sid_map(self) -> dict[int, SemanticId]:
        if self._sid_map is None:
            self._sid_map = self.marketplace_repository.load_semantic_ids()
        return self._sid_map

    @property
    def trajectories(self) -> list[Trajectory]:
        if self._trajectories is None:
            self._trajectories = self.marketplace_repository.load_trajectories()
        return self._trajectories

    @property
    def trie(self) -> SidTrie:
        if self._trie is None:
            self._trie = build_trie(self.sid_map.items())
        return self._trie

    @property
    def inventory(self) -> Inventory:
        """Catalog with sponsorship and current bids."""
        if self._inventory is None:
            _, sponsored = self.marketplace_repository.load_items()
            bids = self.marketplace_repository.load_bids()
            self._inventory = build_inventory(self.sid_map, sponsored, bids)
        return self._inventory

    def _load_scorer(self, name: str) -> BackoffScorer:
        scorer = BackoffScorer.from_document(self.model_repository.load_model(name))
        expected = build_vocabulary(self.sid_map, scorer.vocabulary.codebook_size)
        if scorer.vocabulary != expected:
            raise ArtifactError(
                "Model vocabulary does not match the semantic-ID map",
                model=scorer.vocabulary.to_dict(),
                data=expected.to_dict(),
                advice="Run `gemrec train` again after `gemrec gen-data`",
            )
        return scorer

    @property
    def scorer(self) -> BackoffScorer:
        if self._scorer is None:
            self._scorer = self._load_scorer(MAIN_MODEL)
        return self._scorer

    @property
    def baseline_scorer(self) -> Optional[BackoffScorer]:
        """Ad-free baseline scorer, None when it was never trained."""
        if self._baseline_scorer is None and self.model_repository.model_exists(BASELINE_MODEL):
            self._baseline_scorer = self._load_scorer(BASELINE_MODEL)
        return self._baseline_scorer

    @property
    def lookup(self) -> BidLookup:
        if self._lookup is None:
            self._lookup = build_bid_lookup(self.trie, self.inventory.bids)
        return self._lookup

    @property
    def decoder(self) -> GemDecoder:
        return GemDecoder(self.scorer, self.trie, self.lookup)

    @property
    def baseline_decoder(self) -> Optional[GemDecoder]:
        if self.baseline_scorer is None:
            return None
        return GemDecoder(self.baseline_scorer, self.trie, self.lookup)

    @property
    def eval_cases(self) -> list[EvalCase]:
        if self._eval_cases is None:
            self._eval_cases = build_eval_cases(
                self.trajectories, self.sid_map, self.scorer.vocabulary, self.config.eval_users
            )
        return self._eval_cases

    @property
    def baseline_cases(self) -> list[EvalCase]:
        if self._baseline_cases is None:
            self._baseline_cases = build_eval_cases(
                self.trajectories,
                self.sid_map,
                self.scorer.vocabulary,
                self.config.eval_users,
                strip_ads=True,
            )
        return self._baseline_cases

    @property
    def data_generator(self) -> DataGenerator:
        """Create data generation use case."""
        return DataGenerator(
            config=self.config,
            marketplace_repository=self.marketplace_repository,
            progress_callback=self.progress_callback,
        )

    @property
    def trainer(self) -> ScorerTrainer:
        """Create training use case."""
        return ScorerTrainer(
            marketplace_repository=self.marketplace_repository,
            model_repository=self.model_repository,
            codebook_size=self.config.codebook_size,
            order=self.config.order,
            alpha=self.config.alpha,
        )

    @property
    def evaluator(self) -> Evaluator:
        """Create evaluation use case over the trained artifacts."""
        return Evaluator(
            decoder=self.decoder,
            cases=self.eval_cases,
            report_repository=self.report_repository,
            lambda_grid=self.config.lambda_grid,
            decode_config=self.config.decode_config(),
            seed=derive_seed(self.config.seed, "evaluation"),
            top_k=self.config.top_k,
            baseline_decoder=self.baseline_decoder,
            baseline_cases=self.baseline_cases,
            progress_callback=self.progress_callback,
        )

    def trained_artifacts(self) -> Optional[TrainedArtifacts]:
        """Trained pieces for the audit, or None before `train` has run."""
        if not self.model_repository.model_exists(MAIN_MODEL):
            return None
        return TrainedArtifacts(
            scorer=self.scorer,
            trie=self.trie,
            lookup=self.lookup,
            cases=self.eval_cases,
            baseline_scorer=self.baseline_scorer,
            baseline_cases=self.baseline_cases if self.baseline_scorer else [],
        )

    @property
    def shock_seed(self) -> int:
        return derive_seed(self.config.seed, "shock")

    def make_audit_suite(self, include_trained: bool = True) -> AuditSuite:
        """
        Create audit use case.

        Args:
            include_trained: Also audit the trained model when one exists
        """
        return AuditSuite(
            config=self.config,
            report_repository=self.report_repository,
            artifacts=self.trained_artifacts() if include_trained else None,
            seed=derive_seed(self.config.seed, "audit"),
            progress_callback=self.progress_callback,
        )
