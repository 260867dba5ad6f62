"""Strict-protocol ranking metrics, economic metrics and validity."""

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Optional

from gemrec.application.services.semantic_index import SidTrie, prefix_match_depth
from gemrec.domain.exceptions import ConfigurationError
from gemrec.domain.models import DecodeResult, EvalRecord, Interaction, MetricsRow, Mode
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

Prediction = tuple[Mode, Optional[int]]


def strict_hits(predictions: Sequence[Prediction], truth: Interaction) -> list[int]:
    """Hit indicator per rank: flag and item must both match the truth."""
    return [
        int(mode is truth.mode and item_id == truth.item_id) for mode, item_id in predictions
    ]


def _check_k(k: int) -> None:
    if k < 1:
        raise ConfigurationError("Cutoff k must be >= 1", k=k)


def ndcg_at_k(hits: Sequence[int], k: int = 10) -> float:
    """Binary single-target NDCG: 1 / log2(rank + 1) for the first hit within k."""
    _check_k(k)
    for rank, hit in enumerate(hits[:k], start=1):
        if hit:
            return 1.0 / math.log2(rank + 1)
    return 0.0


def recall_at_k(hits: Sequence[int], k: int = 10) -> float:
    """1.0 iff any hit within the top k."""
    _check_k(k)
    return 1.0 if any(hits[:k]) else 0.0


def predictions_of(result: DecodeResult) -> list[Prediction]:
    """Ranked (flag, item) predictions; every entry carries the committed flag."""
    return [(result.flag, candidate.item_id) for candidate in result.ranking]


def record_hits(record: EvalRecord) -> list[int]:
    return strict_hits(predictions_of(record.result), record.case.truth)


def _mean(values: list[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def strict_metrics(records: Sequence[EvalRecord], k: int = 10) -> tuple[float, float]:
    """Mean strict NDCG@k and Recall@k over all cases (0.0 for no cases)."""
    hits = [record_hits(r) for r in records]
    ndcg = _mean([ndcg_at_k(h, k) for h in hits])
    recall = _mean([recall_at_k(h, k) for h in hits])
    return ndcg or 0.0, recall or 0.0


def conditional_organic_metrics(
    records: Sequence[EvalRecord], k: int = 10
) -> tuple[Optional[float], Optional[float]]:
    """
    NDCG@k and Recall@k of organic-truth cases given that the model chose ORG.

    Each organic-truth case contributes its organic ranking weighted by the
    probability the decoder had of choosing ORG, i.e. the expectation over the
    flag draw of the mean over cases that drew ORG. Records without a
    probability weigh 1 when they drew ORG and 0 otherwise.

    Returns:
        (ndcg, recall), both None when no organic-truth case could draw ORG
    """
    weighted = []
    for r in records:
        organic = r.organic_result
        if r.case.truth.mode is not Mode.ORGANIC or organic is None:
            continue
        if r.organic_weight > 0:
            hits = strict_hits(predictions_of(organic), r.case.truth)
            weighted.append((r.organic_weight, hits))
    total = sum(w for w, _ in weighted)
    if total <= 0:
        logger.warning("Organic-conditional metrics undefined", cases=len(records))
        return None, None
    return (
        sum(w * ndcg_at_k(h, k) for w, h in weighted) / total,
        sum(w * recall_at_k(h, k) for w, h in weighted) / total,
    )


def ad_relevance_metrics(
    records: Sequence[EvalRecord], k: int = 10
) -> tuple[Optional[float], Optional[float]]:
    """
    Strict NDCG@k over AD-slot targets, and mean shared-prefix depth between
    each generated ad and its held-out target.

    Returns:
        (ad_ndcg, mean_prefix_depth), each None when undefined
    """
    ad_targets = [r for r in records if r.case.truth.mode is Mode.SPONSORED]
    ad_ndcg = _mean([ndcg_at_k(record_hits(r), k) for r in ad_targets])
    depths = [
        float(prefix_match_depth(r.result.sid, r.case.truth_sid))
        for r in records
        if r.result.is_ad
    ]
    return ad_ndcg, _mean(depths)


@dataclass(frozen=True)
class EconomicMetrics:
    """Ad volume and first-price revenue."""

    ad_rate: float
    revenue: float
    hv_share: Optional[float]
    n_ads: int


def economic_metrics(
    results: Sequence[DecodeResult], shocked: Optional[Iterable[int]] = None
) -> EconomicMetrics:
    """
    Ad rate, revenue (sum of winning bids in result order) and high-value share.

    high-value share is the fraction of displayed ads whose item is in the
    shocked set; None without a shocked set or without ads.
    """
    ads = [r for r in results if r.is_ad]
    revenue = 0.0
    for r in results:
        revenue += r.price
    ad_rate = len(ads) / len(results) if results else 0.0
    hv_share: Optional[float] = None
    if shocked is not None and ads:
        shocked_set = set(shocked)
        hv_share = sum(1 for r in ads if r.item_id in shocked_set) / len(ads)
    return EconomicMetrics(ad_rate, revenue, hv_share, len(ads))


def validity_rate(results: Sequence[DecodeResult], trie: SidTrie) -> Optional[float]:
    """Fraction of generated ad IDs that resolve to a real item; None without ads."""
    ads = [r for r in results if r.is_ad]
    if not ads:
        return None
    valid = sum(1 for r in ads if trie.resolve(r.sid) is not None)
    return valid / len(ads)


def aggregate(
    records: Sequence[EvalRecord],
    lam: float,
    seed: int,
    trie: SidTrie,
    shocked: Optional[Iterable[int]] = None,
    k: int = 10,
) -> MetricsRow:
    """Collapse one lambda's decoded cases into a MetricsRow."""
    results = [r.result for r in records]
    ndcg, recall = strict_metrics(records, k)
    o_ndcg, o_recall = conditional_organic_metrics(records, k)
    ad_ndcg, depth = ad_relevance_metrics(records, k)
    economics = economic_metrics(results, shocked)
    return MetricsRow(
        lam=lam,
        ad_rate=economics.ad_rate,
        revenue=economics.revenue,
        ndcg10=ndcg,
        recall10=recall,
        o_ndcg10=o_ndcg,
        o_recall10=o_recall,
        ad_ndcg10=ad_ndcg,
        mean_prefix_depth=depth,
        validity=validity_rate(results, trie),
        hv_share=economics.hv_share,
        seed=seed,
    )
