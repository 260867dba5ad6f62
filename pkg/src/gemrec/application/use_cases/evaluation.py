"""Evaluation use case - lambda sweeps, reference/baseline rows and the bid-shock experiment."""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from gemrec.application.services.bid_lookup import build_bid_lookup
from gemrec.application.services.decoder import GemDecoder
from gemrec.application.services.marketplace import apply_bid_shock
from gemrec.application.services.metrics import aggregate, economic_metrics
from gemrec.application.services.vocabulary import context_tokens
from gemrec.domain.models import (
    DecodeConfig,
    DecodeResult,
    EvalCase,
    EvalRecord,
    FlagMode,
    Inventory,
    MetricsRow,
    Mode,
    Progress,
    SemanticId,
    ShockRow,
    Trajectory,
    Vocabulary,
)
from gemrec.domain.repositories import IReportRepository
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

ProgressCallback = Callable[[Progress], None]


def build_eval_cases(
    trajectories: Sequence[Trajectory],
    sid_map: Mapping[int, SemanticId],
    vocabulary: Vocabulary,
    max_users: Optional[int] = None,
    strip_ads: bool = False,
) -> list[EvalCase]:
    """
    Held-out cases: each user's held-out interaction given everything before it.

    The held-out interaction is the ad served with the final organic item when
    there is one, else the last interaction (see `Trajectory.split_holdout`).
    Users are taken in ascending id order; users without interactions are skipped.

    Args:
        trajectories: Logged trajectories
        sid_map: Semantic IDs of the catalog
        vocabulary: Token vocabulary
        max_users: Optional cap on the number of cases
        strip_ads: Drop sponsored interactions from the context (ad-free baseline)
    """
    cases = []
    for trajectory in sorted(trajectories, key=lambda t: t.user_id):
        history, truth = trajectory.split_holdout()
        if truth is None:
            continue
        if max_users is not None and len(cases) >= max_users:
            break
        if strip_ads:
            history = history.without_ads()
        cases.append(
            EvalCase(
                user_id=trajectory.user_id,
                context=context_tokens(history.events, sid_map, vocabulary),
                truth=truth,
                truth_sid=sid_map[truth.item_id],
            )
        )
    logger.debug("Built evaluation cases", cases=len(cases), strip_ads=strip_ads)
    return cases


def decode_cases(
    decoder: GemDecoder,
    cases: Sequence[EvalCase],
    config: DecodeConfig,
    seed: int,
    on_case: Optional[Callable[[], None]] = None,
    organic_cache: Optional[dict[int, DecodeResult]] = None,
) -> list[EvalRecord]:
    """
    Decode every case at one operating point.

    Case i samples its flag from the stream (seed, i), so every lambda sees
    the same uniforms. Organic-truth cases that committed AD are also decoded
    with the flag forced to ORG, so every record carries its organic ranking
    and the probability of ORG it was decoded with.

    Args:
        decoder: Decoder to run
        cases: Evaluation cases
        config: Operating point
        seed: Evaluation seed
        on_case: Called after each case
        organic_cache: Forced-ORG decodes by case index, shared across operating
            points that differ only in lambda or slot modulation
    """
    records = []
    forced = replace(config, flag_mode=FlagMode.FORCE_ORG)
    for index, case in enumerate(cases):
        rng = np.random.default_rng([seed, index])
        result = decoder.decode_next(case.context, config, rng)
        p_organic = _organic_probability(result, config.flag_mode)

        organic: Optional[DecodeResult] = None
        if result.flag is Mode.ORGANIC:
            organic = result
        elif case.truth.mode is Mode.ORGANIC and p_organic > 0:
            if organic_cache is not None and index in organic_cache:
                organic = organic_cache[index]
            else:
                organic = decoder.decode_next(case.context, forced)
                if organic_cache is not None:
                    organic_cache[index] = organic

        records.append(EvalRecord(case, result, config.lam, organic, p_organic))
        if on_case:
            on_case()
    return records


def _organic_probability(result: DecodeResult, flag_mode: FlagMode) -> float:
    if flag_mode is FlagMode.FORCE_ORG:
        return 1.0
    if flag_mode is FlagMode.FORCE_AD:
        return 0.0
    return 1.0 - result.p_ad_post


@dataclass
class SweepResult:
    """Metrics rows of a sweep plus its reference and baseline rows."""

    rows: list[MetricsRow]
    reference: MetricsRow
    baseline: Optional[MetricsRow] = None


@dataclass
class ShockOutcome:
    """Rows of the shock experiment and the shocked item ids."""

    rows: list[ShockRow]
    shocked: frozenset[int]


class Evaluator:
    """Runs the lambda sweep and the bid-shock experiment over held-out cases."""

    def __init__(
        self,
        decoder: GemDecoder,
        cases: Sequence[EvalCase],
        report_repository: IReportRepository,
        lambda_grid: Sequence[float],
        decode_config: DecodeConfig,
        seed: int,
        top_k: int = 10,
        baseline_decoder: Optional[GemDecoder] = None,
        baseline_cases: Optional[Sequence[EvalCase]] = None,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> None:
        """
        Initialize evaluator.

        Args:
            decoder: Decoder over the trained scorer
            cases: Held-out evaluation cases
            report_repository: Destination of tables and plot series
            lambda_grid: Lambda values to sweep
            decode_config: Template config; lam is replaced per grid point
            seed: Evaluation seed shared by every grid point
            top_k: Ranking cutoff for NDCG/Recall
            baseline_decoder: Optional decoder over the ad-free scorer
            baseline_cases: Cases for the baseline (defaults to `cases`)
            progress_callback: Optional callback for progress updates
        """
        self.decoder = decoder
        self.cases = list(cases)
        self.report_repository = report_repository
        self.lambda_grid = sorted(set(lambda_grid))
        self.decode_config = decode_config
        self.seed = seed
        self.top_k = top_k
        self.baseline_decoder = baseline_decoder
        self.baseline_cases = list(baseline_cases) if baseline_cases is not None else self.cases
        self.progress_callback = progress_callback
        self._progress = Progress("idle")

    def _start(self, phase: str, total: int) -> None:
        self._progress = Progress(phase, 0, total)
        if self.progress_callback:
            self.progress_callback(self._progress)

    def _advance(self) -> None:
        self._progress.completed += 1
        if self.progress_callback:
            self.progress_callback(self._progress)

    def _evaluate(
        self,
        decoder: GemDecoder,
        cases: Sequence[EvalCase],
        config: DecodeConfig,
        shocked: Optional[frozenset[int]] = None,
        organic_cache: Optional[dict[int, DecodeResult]] = None,
    ) -> MetricsRow:
        records = decode_cases(
            decoder, cases, config, self.seed, self._advance, organic_cache
        )
        row = aggregate(records, config.lam, self.seed, decoder.trie, shocked, self.top_k)
        logger.info(
            "Evaluated operating point",
            lam=config.lam,
            modulated=config.modulation_enabled,
            ad_rate=row.ad_rate,
            revenue=row.revenue,
            ndcg10=row.ndcg10,
        )
        return row

    def sweep(self) -> SweepResult:
        """
        Evaluate every grid lambda, the unmodulated reference and the ad-free baseline.

        Writes metrics.csv, reference_metrics.csv, baseline_metrics.csv and the
        pareto / steerability / integrity / quality plot series.
        """
        n_runs = len(self.lambda_grid) + 1 + (1 if self.baseline_decoder else 0)
        self._start("sweep", n_runs * len(self.cases))
        logger.info("Starting lambda sweep", grid=self.lambda_grid, cases=len(self.cases))

        organic: dict[int, DecodeResult] = {}
        rows = [
            self._evaluate(
                self.decoder,
                self.cases,
                replace(self.decode_config, lam=lam),
                organic_cache=organic,
            )
            for lam in self.lambda_grid
        ]
        reference = self._evaluate(
            self.decoder,
            self.cases,
            replace(self.decode_config, lam=0.0, modulation_enabled=False),
            organic_cache=organic,
        )
        baseline = None
        if self.baseline_decoder is not None:
            baseline = self._evaluate(
                self.baseline_decoder,
                self.baseline_cases,
                replace(self.decode_config, lam=0.0, flag_mode=FlagMode.FORCE_ORG),
            )

        self._write_sweep(rows, reference, baseline)
        return SweepResult(rows, reference, baseline)

    def _write_sweep(
        self, rows: list[MetricsRow], reference: MetricsRow, baseline: Optional[MetricsRow]
    ) -> None:
        reports = self.report_repository
        reports.write_table("metrics", [r.as_record() for r in rows], MetricsRow.COLUMNS)
        reports.write_table("reference_metrics", [reference.as_record()], MetricsRow.COLUMNS)
        if baseline is not None:
            reports.write_table("baseline_metrics", [baseline.as_record()], MetricsRow.COLUMNS)

        reports.write_series(
            "pareto", [(r.revenue, r.ndcg10) for r in rows], ("revenue", "ndcg10")
        )
        reports.write_series(
            "steerability", [(r.lam, r.ad_rate) for r in rows], ("lambda", "ad_rate")
        )
        reports.write_series(
            "integrity_total", [(r.lam, r.ndcg10) for r in rows], ("lambda", "ndcg10")
        )
        reports.write_series(
            "integrity_organic", [(r.lam, r.o_ndcg10) for r in rows], ("lambda", "o_ndcg10")
        )
        reports.write_series(
            "quality",
            [(r.revenue, r.mean_prefix_depth) for r in rows],
            ("revenue", "mean_prefix_depth"),
        )

    def shock(
        self,
        inventory: Inventory,
        fraction: float = 0.05,
        multiplier: float = 10.0,
        shock_seed: int = 0,
    ) -> ShockOutcome:
        """
        Shock a subset of bids and re-decode without retraining.

        Only the bid lookup is rebuilt. lambda=0 is always evaluated and is the
        uplift baseline (uplift 1.0 there, undefined when its revenue is 0).

        Args:
            inventory: Pre-shock inventory
            fraction: Share of sponsored items to shock
            multiplier: Bid multiplier
            shock_seed: Seed of the shocked-subset draw

        Returns:
            ShockOutcome; shock.csv and shock_items.json are written
        """
        shocked = apply_bid_shock(inventory, fraction, multiplier, shock_seed)
        lookup = build_bid_lookup(self.decoder.trie, shocked.inventory.bids)
        decoder = self.decoder.with_lookup(lookup)
        grid = sorted({0.0, *self.lambda_grid})
        self._start("shock", len(grid) * len(self.cases))
        logger.info("Starting bid-shock run", grid=grid, shocked=len(shocked.shocked))

        economics = []
        organic: dict[int, DecodeResult] = {}
        for lam in grid:
            config = replace(self.decode_config, lam=lam)
            records = decode_cases(
                decoder, self.cases, config, self.seed, self._advance, organic
            )
            economics.append(economic_metrics([r.result for r in records], shocked.shocked))

        base_revenue = economics[0].revenue
        rows = []
        for lam, econ in zip(grid, economics):
            if lam == 0.0:
                uplift: Optional[float] = 1.0
            elif base_revenue > 0:
                uplift = econ.revenue / base_revenue
            else:
                uplift = None
            rows.append(
                ShockRow(
                    lam=lam,
                    ad_rate=econ.ad_rate,
                    revenue=econ.revenue,
                    uplift=uplift,
                    hv_share=econ.hv_share,
                    seed=self.seed,
                )
            )
        if base_revenue <= 0:
            logger.warning("Revenue uplift undefined: no ad revenue at lambda 0")

        self.report_repository.write_table(
            "shock", [r.as_record() for r in rows], ShockRow.COLUMNS
        )
        self.report_repository.write_json(
            "shock_items",
            {
                "fraction": fraction,
                "multiplier": multiplier,
                "shocked": sorted(shocked.shocked),
            },
        )
        return ShockOutcome(rows, shocked.shocked)
