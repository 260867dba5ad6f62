import math
from collections.abc import Callable
from pathlib import Path

import pytest

from gemrec.application.container import Container
from gemrec.application.services.scorer import BackoffScorer
from gemrec.application.use_cases.training import (
    BASELINE_MODEL,
    MAIN_MODEL,
    ScorerTrainer,
    training_view,
)
from gemrec.domain.exceptions import ValidationError
from gemrec.domain.models import Interaction, Mode, SemanticId, Slot, Trajectory, Vocabulary
from gemrec.infrastructure.config import RunConfig
from gemrec.infrastructure.repositories import FileModelRepository, JsonlMarketplaceRepository

ConfigFactory = Callable[..., RunConfig]

SID_MAP = {i: SemanticId((i // 2, i % 2)) for i in range(4)}


def make_trainer(tmp_path: Path, order: int = 4) -> ScorerTrainer:
    marketplace = JsonlMarketplaceRepository(tmp_path / "data")
    marketplace.save_semantic_ids(SID_MAP)
    return ScorerTrainer(
        marketplace_repository=marketplace,
        model_repository=FileModelRepository(tmp_path / f"model{order}"),
        codebook_size=2,
        order=order,
        alpha=0.1,
    )


def make_cyclic_trajectories(n_users: int = 20) -> list[Trajectory]:
    """Every user walks the catalog in a fixed cycle; every fourth step is an ad."""
    return [
        Trajectory(
            user,
            tuple(
                Interaction(Mode.SPONSORED if step % 4 == 3 else Mode.ORGANIC, (user + step) % 4)
                for step in range(9)
            ),
        )
        for user in range(n_users)
    ]


def test_training_view_stops_before_the_held_out_ad() -> None:
    trajectory = make_cyclic_trajectories(1)[0]

    training = training_view(trajectory)

    assert trajectory.events[-2].mode is Mode.SPONSORED
    assert training.events == trajectory.events[:-2]


def test_training_view_drops_a_trailing_organic_item() -> None:
    trajectory = Trajectory(0, (Interaction(Mode.ORGANIC, 0), Interaction(Mode.ORGANIC, 1)))

    training = training_view(trajectory)

    assert training.events == trajectory.events[:1]


def test_longer_context_predicts_a_cycle_better(tmp_path: Path) -> None:
    trajectories = make_cyclic_trajectories()

    with_context = make_trainer(tmp_path, order=4).execute(trajectories)
    unigram = make_trainer(tmp_path, order=0).execute(trajectories)

    assert with_context.heldout_nll < unigram.heldout_nll
    assert with_context.train_nll < unigram.train_nll


def test_training_without_trajectories_fails(tmp_path: Path) -> None:
    with pytest.raises(ValidationError):
        make_trainer(tmp_path).execute([])


def test_baseline_never_saw_an_ad(tmp_path: Path) -> None:
    trainer = make_trainer(tmp_path)

    trainer.execute(make_cyclic_trajectories())

    baseline = BackoffScorer.from_document(trainer.model_repository.load_model(BASELINE_MODEL))
    table = baseline.counts[(Vocabulary.BOS,)]
    p_ad = math.exp(baseline.logits((Vocabulary.BOS,), Slot.flag())[Vocabulary.AD])
    assert table.get(Vocabulary.AD, 0) == 0
    assert p_ad == pytest.approx(0.1 / (table[Vocabulary.ORG] + 0.2))


def test_main_model_learns_the_ad_pattern(tmp_path: Path) -> None:
    trainer = make_trainer(tmp_path)

    summary = trainer.execute(make_cyclic_trajectories())

    model = BackoffScorer.from_document(trainer.model_repository.load_model(MAIN_MODEL))
    assert summary.train_ad_fraction == pytest.approx(1 / 7)
    assert any(Vocabulary.AD in table for table in model.counts.values())


def test_trained_run_saves_both_models(trained_config: RunConfig) -> None:
    repository = FileModelRepository(trained_config.model_dir)

    assert repository.model_exists(MAIN_MODEL)
    assert repository.model_exists(BASELINE_MODEL)


def test_retraining_is_byte_identical(trained_config: RunConfig, tmp_path: Path) -> None:
    trainer = ScorerTrainer(
        marketplace_repository=JsonlMarketplaceRepository(trained_config.data_dir),
        model_repository=FileModelRepository(tmp_path),
        codebook_size=trained_config.codebook_size,
        order=trained_config.order,
        alpha=trained_config.alpha,
    )

    trainer.execute()

    for name in (MAIN_MODEL, BASELINE_MODEL):
        original = (trained_config.model_dir / f"{name}.json").read_bytes()
        assert (tmp_path / f"{name}.json").read_bytes() == original


def test_held_out_nll_exceeds_training_nll_across_seeds(
    make_config: ConfigFactory, tmp_path: Path
) -> None:
    summaries = []
    for seed in range(5):
        container = Container(make_config(seed=seed, out_dir=tmp_path / f"seed{seed}"))
        container.data_generator.execute()
        summaries.append(container.trainer.execute())

    train = sum(s.train_nll for s in summaries) / len(summaries)
    heldout = sum(s.heldout_nll for s in summaries) / len(summaries)
    assert heldout >= train
