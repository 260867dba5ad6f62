"""Shared fixtures: a small, fast run configuration and a trained run directory."""

from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from gemrec.application.container import Container
from gemrec.infrastructure.config import RunConfig, load_run_config

SMALL_RUN: dict[str, Any] = {
    "n_items": 120,
    "n_users": 80,
    "depth": 2,
    "codebook_size": 4,
    "embedding_dim": 4,
    "n_categories": 4,
    "n_subcategories": 2,
    "kmeans_iterations": 10,
    "kmeans_restarts": 1,
    "history_min": 3,
    "history_max": 8,
    "lambda_grid": [0.0, 1.0, 5.0],
    "eval_users": 40,
    "beam_width": 5,
    "audit_instances": 3,
    "audit_contexts": 3,
    "audit_grid_points": 8,
    "audit_oracle_models": 3,
    "audit_integrity_contexts": 20,
    "audit_ad_free_max_rate": 0.1,
}

ConfigFactory = Callable[..., RunConfig]


@pytest.fixture
def make_config(tmp_path: Path) -> ConfigFactory:
    """Build a small RunConfig writing under tmp_path; keyword arguments override."""

    def factory(**overrides: Any) -> RunConfig:
        values = {**SMALL_RUN, "out_dir": tmp_path / "run", **overrides}
        return load_run_config(preset=values.pop("preset", None), overrides=values)

    return factory


@pytest.fixture(scope="session")
def trained_config(tmp_path_factory: pytest.TempPathFactory) -> RunConfig:
    """Generated and trained small run, shared by read-only tests."""
    config = load_run_config(
        overrides={**SMALL_RUN, "out_dir": tmp_path_factory.mktemp("trained")}
    )
    container = Container(config)
    container.data_generator.execute()
    container.trainer.execute()
    return config


@pytest.fixture
def trained_container(trained_config: RunConfig) -> Container:
    return Container(trained_config)
