import json
from collections.abc import Callable

import pytest

from gemrec.application.container import Container
from gemrec.application.services.decoder import GemDecoder, modulate_item_logits
from gemrec.application.use_cases.audit import AuditSuite, make_toy_instance
from gemrec.domain.exceptions import AuditFailureError
from gemrec.domain.models import AuditCheck, AuditReport, DecodeConfig, Mode
from gemrec.infrastructure.config import RunConfig
from gemrec.infrastructure.repositories import FileReportRepository

ConfigFactory = Callable[..., RunConfig]

CHECKS = [
    "monotonicity",
    "safe_fallback",
    "organic_integrity",
    "ad_free_generalization",
    "beam_oracle",
]


class InvertedBidDecoder(GemDecoder):
    """Pushes ads away from high bidders."""

    def modulate_slot(
        self, z_org: float, z_ad: float, config: DecodeConfig
    ) -> tuple[float, float]:
        z_org, boosted = super().modulate_slot(z_org, z_ad, config)
        return z_org, 2 * z_ad - boosted

    def modulate_items(
        self,
        scores: dict[int, float],
        prefix: tuple[int, ...],
        flag: Mode,
        config: DecodeConfig,
    ) -> dict[int, float]:
        boosted = super().modulate_items(scores, prefix, flag, config)
        return {code: 2 * z - boosted[code] for code, z in scores.items()}


class NarrowBeamInversionDecoder(InvertedBidDecoder):
    """Inverts bids at beam width 2 only."""

    def modulate_slot(
        self, z_org: float, z_ad: float, config: DecodeConfig
    ) -> tuple[float, float]:
        if config.beam_width != 2:
            return GemDecoder.modulate_slot(self, z_org, z_ad, config)
        return super().modulate_slot(z_org, z_ad, config)

    def modulate_items(
        self,
        scores: dict[int, float],
        prefix: tuple[int, ...],
        flag: Mode,
        config: DecodeConfig,
    ) -> dict[int, float]:
        if config.beam_width != 2:
            return GemDecoder.modulate_items(self, scores, prefix, flag, config)
        return super().modulate_items(scores, prefix, flag, config)


class LeakyOrganicDecoder(GemDecoder):
    """Lets bids reach organic rankings."""

    def modulate_items(
        self,
        scores: dict[int, float],
        prefix: tuple[int, ...],
        flag: Mode,
        config: DecodeConfig,
    ) -> dict[int, float]:
        if not config.modulation_enabled:
            return scores
        return modulate_item_logits(scores, config.item_lambda, self.lookup, prefix)


def test_toy_instances_are_reproducible() -> None:
    first = make_toy_instance(3, seed=11, n_contexts=4)
    second = make_toy_instance(3, seed=11, n_contexts=4)

    assert first.sid_map == second.sid_map
    assert first.bids == second.bids
    assert first.contexts == second.contexts
    assert first.lam == second.lam


def test_all_paths_instance_covers_every_code_tuple() -> None:
    instance = make_toy_instance(0, seed=5, n_contexts=1, codebook_size=3, depth=2, all_paths=True)

    assert len(instance.trie) == 9
    assert {sid.codes for sid in instance.sid_map.values()} == {
        (a, b) for a in range(3) for b in range(3)
    }


def test_toy_audit_passes(make_config: ConfigFactory) -> None:
    suite = AuditSuite(make_config())

    report = suite.execute()

    assert [check.name for check in report.checks] == CHECKS
    assert report.passed
    assert all(check.cases > 0 for check in report.checks)
    AuditSuite.ensure_passed(report)


def test_inverted_bids_break_monotonicity(make_config: ConfigFactory) -> None:
    config = make_config(audit_instances=6, audit_contexts=4)
    suite = AuditSuite(config, decoder_factory=InvertedBidDecoder)

    report = suite.execute()

    monotonicity = report.get("monotonicity")
    assert not monotonicity.passed
    assert monotonicity.failures
    assert not report.passed


def test_drops_at_the_configured_width_fail_the_audit(make_config: ConfigFactory) -> None:
    config = make_config(beam_width=2, audit_instances=6, audit_contexts=4)
    suite = AuditSuite(config, decoder_factory=NarrowBeamInversionDecoder)

    monotonicity = suite.check_monotonicity()

    assert not monotonicity.passed
    assert {failure["regime"] for failure in monotonicity.failures} == {"configured"}
    assert monotonicity.cases == 3 * 6 * 4


def test_leaky_organic_decoder_breaks_integrity(make_config: ConfigFactory) -> None:
    suite = AuditSuite(make_config(), decoder_factory=LeakyOrganicDecoder)

    report = suite.execute()

    assert not report.get("organic_integrity").passed
    assert report.get("safe_fallback").passed


def test_failed_report_raises_with_check_names() -> None:
    report = AuditReport(
        [AuditCheck("monotonicity", True), AuditCheck("beam_oracle", False, cases=3)]
    )

    with pytest.raises(AuditFailureError) as exc_info:
        AuditSuite.ensure_passed(report)

    assert exc_info.value.context["checks"] == ["beam_oracle"]


def test_trained_audit_writes_the_report(trained_container: Container) -> None:
    suite = trained_container.make_audit_suite()

    report = suite.execute()

    assert report.passed
    assert "baseline_p_ad_bos" in report.get("ad_free_generalization").notes
    ad_free = report.get("ad_free_generalization").notes
    assert ad_free["baseline_expected_ad_rate"] < trained_container.config.audit_ad_free_max_rate
    assert report.get("safe_fallback").notes["metric_cases"] > 0
    path = trained_container.config.report_dir / "audit_report.json"
    document = json.loads(path.read_text())
    assert document["passed"] is True
    assert [c["name"] for c in document["checks"]] == CHECKS


def test_ad_free_model_over_the_rate_bound_fails(trained_container: Container) -> None:
    config = trained_container.config.model_copy(update={"audit_ad_free_max_rate": 1e-6})
    suite = AuditSuite(config, artifacts=trained_container.trained_artifacts())

    check = suite.check_ad_free_generalization()

    assert not check.passed
    assert check.failures[-1]["source"] == "baseline"
    assert check.notes["baseline_expected_ad_rate"] >= 1e-6


def test_toy_only_audit_skips_the_trained_model(
    trained_container: Container, make_config: ConfigFactory
) -> None:
    config = make_config()
    suite = AuditSuite(
        config,
        report_repository=FileReportRepository(config.report_dir),
        artifacts=None,
    )

    report = suite.execute()

    assert report.passed
    assert "baseline_p_ad_bos" not in report.get("ad_free_generalization").notes
    assert trained_container.make_audit_suite(include_trained=False).artifacts is None
