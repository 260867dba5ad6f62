from collections.abc import Callable
from pathlib import Path

from gemrec.application.container import Container
from gemrec.domain.models import Mode, Progress
from gemrec.infrastructure.config import RunConfig

ConfigFactory = Callable[..., RunConfig]

DATA_FILES = ("items.jsonl", "semantic_ids.jsonl", "bids.jsonl", "trajectories.jsonl")


def test_generation_writes_every_data_file(make_config: ConfigFactory) -> None:
    config = make_config()

    summary = Container(config).data_generator.execute()

    for name in DATA_FILES:
        assert (config.data_dir / name).exists()
    assert summary.n_items == 120
    assert summary.n_users == 80
    assert summary.n_sponsored == 24


def test_generated_ids_cover_the_catalog(make_config: ConfigFactory) -> None:
    container = Container(make_config())

    container.data_generator.execute()

    sid_map = container.sid_map
    assert sorted(sid_map) == list(range(120))
    assert len({sid.path for sid in sid_map.values()}) == 120
    assert all(sid.depth == 2 for sid in sid_map.values())


def test_logged_ads_are_sponsored_items(make_config: ConfigFactory) -> None:
    container = Container(make_config())

    summary = container.data_generator.execute()

    sponsored = container.inventory.sponsored_ids
    ads = [ev for t in container.trajectories for ev in t.events if ev.mode is Mode.SPONSORED]
    assert len(ads) == summary.n_ads
    assert all(ev.item_id in sponsored for ev in ads)
    assert all(0.1 <= bid <= 1.0 for bid in container.inventory.bids.values())


def test_same_seed_gives_identical_files(make_config: ConfigFactory, tmp_path: Path) -> None:
    first = make_config(out_dir=tmp_path / "a")
    second = make_config(out_dir=tmp_path / "b")

    Container(first).data_generator.execute()
    Container(second).data_generator.execute()

    for name in DATA_FILES:
        assert (first.data_dir / name).read_bytes() == (second.data_dir / name).read_bytes()


def test_different_seed_changes_the_logs(make_config: ConfigFactory, tmp_path: Path) -> None:
    first = make_config(out_dir=tmp_path / "a")
    second = make_config(out_dir=tmp_path / "b", seed=1)

    Container(first).data_generator.execute()
    Container(second).data_generator.execute()

    name = "trajectories.jsonl"
    assert (first.data_dir / name).read_bytes() != (second.data_dir / name).read_bytes()


def test_high_preset_logs_more_ads(make_config: ConfigFactory, tmp_path: Path) -> None:
    main_config = make_config(out_dir=tmp_path / "main")
    high_config = make_config(out_dir=tmp_path / "high", preset="high")

    main = Container(main_config).data_generator.execute()
    high = Container(high_config).data_generator.execute()

    assert high_config.p == 1.0
    assert 0.0 < main.ad_fraction < 0.3
    assert high.ad_fraction > main.ad_fraction


def test_progress_reports_every_phase(make_config: ConfigFactory) -> None:
    seen: list[Progress] = []
    container = Container(make_config(), progress_callback=seen.append)

    container.data_generator.execute()

    assert [p.phase for p in seen] == list(container.data_generator.PHASES)
    assert seen[-1].completed == seen[-1].total
