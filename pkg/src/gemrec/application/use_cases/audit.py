"""Audit use case - executable checks of the decoder's mechanism guarantees."""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np

from gemrec.application.services.bid_lookup import BidLookup, build_bid_lookup
from gemrec.application.services.decoder import GemDecoder
from gemrec.application.services.metrics import aggregate
from gemrec.application.services.scorer import BackoffScorer, RandomTableScorer, train_scorer
from gemrec.application.services.semantic_index import SidTrie, build_trie, disambiguate
from gemrec.application.services.vocabulary import build_vocabulary, context_tokens, flatten
from gemrec.application.use_cases.evaluation import decode_cases
from gemrec.domain.exceptions import AuditFailureError
from gemrec.domain.models import (
    BID_CEILING,
    BID_FLOOR,
    AuditCheck,
    AuditReport,
    DecodeConfig,
    EvalCase,
    FlagMode,
    Interaction,
    Mode,
    Progress,
    RankedCandidate,
    SemanticId,
    Slot,
    Trajectory,
    Vocabulary,
)
from gemrec.domain.repositories import IReportRepository
from gemrec.domain.services import IScorer
from gemrec.infrastructure.config import RunConfig
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

AUDIT_LAMBDAS = (0.5, 1.0, 2.0, 5.0)
ORGANIC_LAMBDAS = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
METRIC_TOLERANCE = 1e-12
MAX_REPORTED_FAILURES = 25

DecoderFactory = Callable[[IScorer, SidTrie, BidLookup], GemDecoder]


@dataclass
class ToyInstance:
    """A small random catalog with a seeded random-table scorer."""

    index: int
    scorer: IScorer
    trie: SidTrie
    sid_map: dict[int, SemanticId]
    bids: dict[int, float]
    contexts: list[tuple[int, ...]]
    lam: float

    @property
    def vocabulary(self) -> Vocabulary:
        return self.scorer.vocabulary


def make_toy_instance(
    index: int,
    seed: int,
    n_contexts: int,
    codebook_size: Optional[int] = None,
    depth: Optional[int] = None,
    max_items: int = 30,
    all_paths: bool = False,
) -> ToyInstance:
    """
    Draw a toy decoding instance.

    C is drawn from {2, 3, 4} and D from {1, 2, 3} unless given. Most items are
    sponsored. With `all_paths` the catalog is every code tuple exactly once.
    """
    rng = np.random.default_rng([seed, index])
    c = codebook_size or int(rng.integers(2, 5))
    d = depth or int(rng.integers(1, 4))
    if all_paths:
        grids = np.meshgrid(*([np.arange(c)] * d), indexing="ij")
        codes = [tuple(int(v) for v in row) for row in np.stack(grids, -1).reshape(-1, d)]
    else:
        n_items = int(rng.integers(4, max_items + 1))
        codes = [tuple(int(v) for v in rng.integers(0, c, size=d)) for _ in range(n_items)]

    sid_map = disambiguate(enumerate(codes))
    trie = build_trie(sid_map.items())
    vocabulary = build_vocabulary(sid_map, c)
    sponsored = [i for i in sorted(sid_map) if rng.random() < 0.8] or [0]
    bids = {i: float(rng.uniform(BID_FLOOR, BID_CEILING)) for i in sponsored}
    scorer = RandomTableScorer(vocabulary, seed=int(rng.integers(2**31)))

    contexts = []
    for _ in range(n_contexts):
        events = [
            Interaction(
                Mode.SPONSORED if rng.random() < 0.3 else Mode.ORGANIC,
                int(rng.integers(len(sid_map))),
            )
            for _ in range(int(rng.integers(0, 4)))
        ]
        contexts.append(context_tokens(events, sid_map, vocabulary))
    return ToyInstance(
        index=index,
        scorer=scorer,
        trie=trie,
        sid_map=sid_map,
        bids=bids,
        contexts=contexts,
        lam=float(rng.choice(AUDIT_LAMBDAS)),
    )


def _ranking_key(ranking: Sequence[RankedCandidate]) -> list[tuple[Any, ...]]:
    return [(c.sid.path, c.item_id, c.score, c.base_score) for c in ranking]


@dataclass
class TrainedArtifacts:
    """Trained model pieces the audit can exercise besides toy instances."""

    scorer: IScorer
    trie: SidTrie
    lookup: BidLookup
    cases: list[EvalCase]
    baseline_scorer: Optional[BackoffScorer] = None
    baseline_cases: list[EvalCase] = field(default_factory=list)


class _CheckBuilder:
    """Collects cases and failures of one check."""

    def __init__(self, name: str) -> None:
        self.check = AuditCheck(name=name, passed=True)
        self.n_failures = 0

    def case(self) -> None:
        self.check.cases += 1

    def fail(self, **details: Any) -> None:
        self.check.passed = False
        self.n_failures += 1
        if len(self.check.failures) < MAX_REPORTED_FAILURES:
            self.check.failures.append(details)

    def done(self) -> AuditCheck:
        self.check.notes.setdefault("failures_total", self.n_failures)
        return self.check


class AuditSuite:
    """
    Runs the mechanism audits.

    monotonicity, safe_fallback, organic_integrity, ad_free_generalization
    and beam_oracle. `decoder_factory` builds every decoder under audit, so a
    modified decoder class can be checked the same way.
    """

    def __init__(
        self,
        config: RunConfig,
        report_repository: Optional[IReportRepository] = None,
        decoder_factory: DecoderFactory = GemDecoder,
        artifacts: Optional[TrainedArtifacts] = None,
        seed: Optional[int] = None,
        progress_callback: Optional[Callable[[Progress], None]] = None,
    ) -> None:
        """
        Initialize audit suite.

        Args:
            config: Resolved run configuration (audit sizes, K, lambda grid, m, alpha)
            report_repository: Optional destination of audit_report.json
            decoder_factory: Decoder constructor (scorer, trie, lookup)
            artifacts: Optional trained model pieces
            seed: Seed of the toy instances (defaults to config.seed)
            progress_callback: Optional callback for progress updates
        """
        self.config = config
        self.report_repository = report_repository
        self.decoder_factory = decoder_factory
        self.artifacts = artifacts
        self.seed = config.seed if seed is None else seed
        self.progress_callback = progress_callback
        self._instances: Optional[list[ToyInstance]] = None

    @property
    def instances(self) -> list[ToyInstance]:
        """Toy instances shared by the toy-level checks."""
        if self._instances is None:
            self._instances = [
                make_toy_instance(i, self.seed, self.config.audit_contexts)
                for i in range(self.config.audit_instances)
            ]
        return self._instances

    def _decoder(self, scorer: IScorer, trie: SidTrie, bids: dict[int, float]) -> GemDecoder:
        return self.decoder_factory(scorer, trie, build_bid_lookup(trie, bids))

    def _report(self, phase: str, completed: int, total: int) -> None:
        if self.progress_callback:
            self.progress_callback(Progress(phase, completed, total))

    def execute(self) -> AuditReport:
        """
        Run every audit and write audit_report.json.

        Returns:
            AuditReport (inspect `passed` or call `ensure_passed`)
        """
        logger.info(
            "Starting audit",
            instances=self.config.audit_instances,
            trained=self.artifacts is not None,
        )
        checks = [
            self.check_monotonicity,
            self.check_safe_fallback,
            self.check_organic_integrity,
            self.check_ad_free_generalization,
            self.check_beam_oracle,
        ]
        report = AuditReport()
        for index, check in enumerate(checks):
            result = check()
            report.checks.append(result)
            self._report("audit", index + 1, len(checks))
            log = logger.info if result.passed else logger.warning
            log("Audit check finished", check=result.name, passed=result.passed, cases=result.cases)

        if self.report_repository is not None:
            self.report_repository.write_json("audit_report", report.to_dict())
        return report

    @staticmethod
    def ensure_passed(report: AuditReport) -> None:
        """
        Raises:
            AuditFailureError: If any check failed
        """
        failed = [c.name for c in report.checks if not c.passed]
        if failed:
            raise AuditFailureError("Audit failed", checks=failed)

    def check_monotonicity(self) -> AuditCheck:
        """
        Allocation of a target item must not decrease as its own bid rises.

        Checked at greedy (K=1), exhaustive and the configured beam width; a
        drop at any width is a failure.
        """
        builder = _CheckBuilder("monotonicity")
        grid = np.linspace(BID_FLOOR, BID_CEILING, self.config.audit_grid_points)
        rng = np.random.default_rng([self.seed, 1])

        for instance in self.instances:
            eligible = sorted(instance.bids)
            regimes = {
                "greedy": 1,
                "exhaustive": len(instance.trie),
                "configured": self.config.beam_width,
            }
            for ctx_index, context in enumerate(instance.contexts):
                target = int(rng.choice(eligible))
                curves: dict[str, list[float]] = {name: [] for name in regimes}
                for bid in grid:
                    decoder = self._decoder(
                        instance.scorer, instance.trie, {**instance.bids, target: float(bid)}
                    )
                    for name, width in regimes.items():
                        config = DecodeConfig(lam=instance.lam, beam_width=width)
                        curves[name].append(
                            decoder.allocation_probability(target, context, config)
                        )

                for name, curve in curves.items():
                    builder.case()
                    for j in range(1, len(curve)):
                        if curve[j] < curve[j - 1]:
                            builder.fail(
                                instance=instance.index,
                                context=ctx_index,
                                regime=name,
                                lam=instance.lam,
                                target=target,
                                grid_point=j,
                                bid=float(grid[j]),
                                before=curve[j - 1],
                                after=curve[j],
                            )

        builder.check.notes["grid_points"] = len(grid)
        builder.check.notes["configured_width"] = self.config.beam_width
        return builder.done()

    def _fallback_toy(self, builder: _CheckBuilder, instance: ToyInstance) -> None:
        decoder = self._decoder(instance.scorer, instance.trie, instance.bids)
        zero = DecodeConfig(lam=0.0, beam_width=self.config.beam_width)
        off = replace(zero, modulation_enabled=False)
        code_prefixes = sorted(
            {sid.codes[:k] for sid in instance.sid_map.values() for k in range(sid.depth)}
        )
        for ctx_index, context in enumerate(instance.contexts):
            builder.case()
            z_org, z_ad = decoder.flag_logits(context)
            if decoder.modulate_slot(z_org, z_ad, zero) != (z_org, z_ad):
                builder.fail(instance=instance.index, context=ctx_index, level="slot")
            for prefix in code_prefixes:
                for flag in (Mode.ORGANIC, Mode.SPONSORED):
                    base, modulated = decoder.step_logits(context, prefix, flag, zero)
                    if base != modulated:
                        builder.fail(
                            instance=instance.index,
                            context=ctx_index,
                            level="item",
                            prefix=list(prefix),
                            flag=flag.value,
                        )
            for flag_mode in (FlagMode.FORCE_ORG, FlagMode.FORCE_AD):
                modulated_result = decoder.decode_next(context, replace(zero, flag_mode=flag_mode))
                reference = decoder.decode_next(context, replace(off, flag_mode=flag_mode))
                if modulated_result != reference:
                    builder.fail(
                        instance=instance.index,
                        context=ctx_index,
                        level="decode",
                        flag_mode=flag_mode.value,
                    )

    def _fallback_metrics(self, builder: _CheckBuilder, artifacts: TrainedArtifacts) -> None:
        decoder = self.decoder_factory(artifacts.scorer, artifacts.trie, artifacts.lookup)
        cases = artifacts.cases[: self.config.audit_integrity_contexts]
        zero = self.config.decode_config(lam=0.0)
        rows = [
            aggregate(
                decode_cases(decoder, cases, config, self.seed),
                0.0,
                self.seed,
                artifacts.trie,
                k=self.config.top_k,
            )
            for config in (zero, replace(zero, modulation_enabled=False))
        ]
        builder.case()
        modulated, reference = (row.as_record() for row in rows)
        for column, value in modulated.items():
            other = reference[column]
            if value is None or other is None:
                same = value is None and other is None
            else:
                same = math.isclose(value, other, rel_tol=0.0, abs_tol=METRIC_TOLERANCE)
            if not same:
                builder.fail(level="metrics", column=column, modulated=value, reference=other)
        builder.check.notes["metric_cases"] = len(cases)

    def check_safe_fallback(self) -> AuditCheck:
        """At lambda 0 every modulated logit, decode and metric equals the unmodulated one."""
        builder = _CheckBuilder("safe_fallback")
        for instance in self.instances:
            self._fallback_toy(builder, instance)
        if self.artifacts is not None:
            self._fallback_metrics(builder, self.artifacts)
        return builder.done()

    def _organic_rankings(
        self,
        builder: _CheckBuilder,
        decoder: GemDecoder,
        contexts: Sequence[tuple[int, ...]],
        source: str,
    ) -> None:
        for ctx_index, context in enumerate(contexts):
            builder.case()
            reference: Optional[list[tuple[Any, ...]]] = None
            for lam in ORGANIC_LAMBDAS:
                config = DecodeConfig(
                    lam=lam, beam_width=self.config.beam_width, flag_mode=FlagMode.FORCE_ORG
                )
                result = decoder.decode_next(context, config)
                ranking = _ranking_key(result.ranking)
                if result.price != 0.0:
                    builder.fail(source=source, context=ctx_index, lam=lam, reason="priced")
                if reference is None:
                    reference = ranking
                elif ranking != reference:
                    builder.fail(source=source, context=ctx_index, lam=lam, reason="ranking")

    def check_organic_integrity(self) -> AuditCheck:
        """FORCE_ORG rankings (paths and scores) are identical across lambda."""
        builder = _CheckBuilder("organic_integrity")
        for instance in self.instances:
            decoder = self._decoder(instance.scorer, instance.trie, instance.bids)
            self._organic_rankings(builder, decoder, instance.contexts, f"toy{instance.index}")
        if self.artifacts is not None:
            a = self.artifacts
            decoder = self.decoder_factory(a.scorer, a.trie, a.lookup)
            contexts = [c.context for c in a.cases[: self.config.audit_integrity_contexts]]
            self._organic_rankings(builder, decoder, contexts, "trained")
        builder.check.notes["lambdas"] = list(ORGANIC_LAMBDAS)
        return builder.done()

    def _ad_floor(self, builder: _CheckBuilder, scorer: BackoffScorer, source: str) -> None:
        """P(AD | BOS) of a model trained on ad-free logs sits at the smoothing floor."""
        alpha = scorer.alpha
        table = scorer.counts.get((Vocabulary.BOS,) if scorer.order >= 1 else (), {})
        total = table.get(Vocabulary.ORG, 0) + table.get(Vocabulary.AD, 0)
        p_ad = math.exp(scorer.logits((Vocabulary.BOS,), Slot.flag())[Vocabulary.AD])
        builder.case()
        builder.check.notes[f"{source}_p_ad_bos"] = p_ad
        if table.get(Vocabulary.AD, 0) or total == 0:
            builder.fail(source=source, reason="corpus is not ad-free", total=total)
            return
        expected = alpha / (total + 2 * alpha)
        if p_ad > 2 * alpha / total or not math.isclose(p_ad, expected, rel_tol=1e-9):
            builder.fail(source=source, p_ad=p_ad, expected=expected, bound=2 * alpha / total)

    def check_ad_free_generalization(self) -> AuditCheck:
        """A model trained without ads collapses to the organic recommender."""
        builder = _CheckBuilder("ad_free_generalization")
        rng = np.random.default_rng([self.seed, 2])
        instance = make_toy_instance(0, self.seed + 1, 0, codebook_size=3, depth=2)
        items = sorted(instance.sid_map)
        corpus = [
            flatten(
                Trajectory(
                    user,
                    tuple(
                        Interaction(Mode.ORGANIC, int(rng.choice(items)))
                        for _ in range(int(rng.integers(1, 6)))
                    ),
                ),
                instance.sid_map,
                instance.vocabulary,
            )
            for user in range(50)
        ]
        toy = train_scorer(corpus, instance.vocabulary, self.config.order, self.config.alpha)
        self._ad_floor(builder, toy, "toy")

        a = self.artifacts
        if a is not None and a.baseline_scorer is not None:
            self._ad_floor(builder, a.baseline_scorer, "baseline")
            decoder = self.decoder_factory(a.baseline_scorer, a.trie, a.lookup)
            zero = DecodeConfig(lam=0.0)
            contexts = [c.context for c in a.baseline_cases[: self.config.audit_integrity_contexts]]
            if contexts:
                builder.case()
                rate = sum(decoder.ad_probability(c, zero) for c in contexts) / len(contexts)
                builder.check.notes["baseline_expected_ad_rate"] = rate
                if rate >= self.config.audit_ad_free_max_rate:
                    builder.fail(
                        source="baseline",
                        expected_ad_rate=rate,
                        bound=self.config.audit_ad_free_max_rate,
                        contexts=len(contexts),
                    )
        return builder.done()

    def check_beam_oracle(self) -> AuditCheck:
        """With K >= the number of paths, beam search equals exhaustive enumeration."""
        builder = _CheckBuilder("beam_oracle")
        for model in range(self.config.audit_oracle_models):
            instance = make_toy_instance(
                model, self.seed + 2, 1, codebook_size=3, depth=2, all_paths=True
            )
            decoder = self._decoder(instance.scorer, instance.trie, instance.bids)
            width = len(instance.trie)
            for context in [(Vocabulary.BOS,), *instance.contexts]:
                for flag in (Mode.ORGANIC, Mode.SPONSORED):
                    for lam in self.config.lambda_grid:
                        builder.case()
                        config = DecodeConfig(lam=lam, beam_width=width)
                        beam = _ranking_key(decoder.beam_search(context, flag, config))
                        oracle = _ranking_key(decoder.enumerate_sequences(context, flag, config))
                        if beam != oracle:
                            builder.fail(model=model, flag=flag.value, lam=lam)
            builder.check.notes["beam_width"] = width
        return builder.done()
