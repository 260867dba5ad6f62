import json
from pathlib import Path

import pytest

from gemrec.domain.exceptions import ConfigurationError
from gemrec.domain.models import FlagMode
from gemrec.infrastructure.config import RESOLVED_CONFIG_FILE, load_run_config


def write_config(path: Path, values: dict[str, object]) -> Path:
    path.write_text(json.dumps(values))
    return path


def test_defaults_use_the_main_preset() -> None:
    config = load_run_config()

    assert config.preset == "main"
    assert (config.p, config.r) == (0.4, 0.05)
    assert config.depth == 3
    assert config.codebook_size == 16
    assert config.beam_width == 10
    assert config.lambda_grid == [0.0, 0.5, 1.0, 2.0, 5.0, 7.5, 10.0]


def test_high_preset_raises_the_ad_rate() -> None:
    config = load_run_config(preset="high")

    assert (config.p, config.r) == (1.0, 0.5)


def test_unknown_preset_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        load_run_config(preset="aggressive")


def test_unknown_key_in_config_file_is_rejected(tmp_path: Path) -> None:
    path = write_config(tmp_path / "run.json", {"depth": 2, "beams": 4})

    with pytest.raises(ConfigurationError):
        load_run_config(config_file=path)


def test_out_of_range_value_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        load_run_config(overrides={"p": 1.5})


def test_prefix_depth_cannot_exceed_id_depth() -> None:
    with pytest.raises(ConfigurationError):
        load_run_config(overrides={"depth": 2, "d": 3})


def test_explicit_values_beat_file_values_beat_preset(tmp_path: Path) -> None:
    path = write_config(tmp_path / "run.json", {"p": 0.3, "r": 0.2, "seed": 4})

    config = load_run_config(preset="high", config_file=path, overrides={"r": 0.1, "seed": None})

    assert config.preset == "high"
    assert config.p == 0.3
    assert config.r == 0.1
    assert config.seed == 4


def test_preset_can_come_from_the_file(tmp_path: Path) -> None:
    path = write_config(tmp_path / "run.json", {"preset": "high"})

    config = load_run_config(config_file=path)

    assert config.p == 1.0


def test_lambda_grid_accepts_a_comma_list() -> None:
    config = load_run_config(overrides={"lambda_grid": "5, 0,1,1"})

    assert config.lambda_grid == [0.0, 1.0, 5.0]


def test_negative_lambda_is_rejected() -> None:
    with pytest.raises(ConfigurationError):
        load_run_config(overrides={"lambda_grid": [0.0, -1.0]})


def test_decode_config_carries_run_settings() -> None:
    config = load_run_config(overrides={"beam_width": 3, "lambda_item": 2.0, "seed": 9})

    decode = config.decode_config(lam=0.5, flag_mode=FlagMode.FORCE_AD)

    assert decode.lam == 0.5
    assert decode.beam_width == 3
    assert decode.item_lambda == 2.0
    assert decode.slot_lambda == 0.5
    assert decode.seed == 9
    assert decode.flag_mode is FlagMode.FORCE_AD


def test_resolved_config_reloads_to_the_same_run(tmp_path: Path) -> None:
    original = load_run_config(
        preset="high", overrides={"seed": 3, "out_dir": tmp_path, "lambda_grid": [0.0, 2.0]}
    )

    path = original.write_resolved(tmp_path)
    reloaded = load_run_config(config_file=path)

    assert path.name == RESOLVED_CONFIG_FILE
    assert reloaded == original


def test_unreadable_config_file_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "run.json"
    path.write_text("[1, 2, 3]")

    with pytest.raises(ConfigurationError):
        load_run_config(config_file=path)
    with pytest.raises(ConfigurationError):
        load_run_config(config_file=tmp_path / "missing.json")
