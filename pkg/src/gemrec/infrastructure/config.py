"""Run configuration using Pydantic settings."""

import json
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from gemrec.domain.exceptions import ArtifactError, ConfigurationError
from gemrec.domain.models import DecodeConfig, FlagMode, PolicyParams

PresetName = Literal["main", "high"]

PRESETS: dict[str, dict[str, Any]] = {
    "main": {"p": 0.4, "r": 0.05},
    "high": {"p": 1.0, "r": 0.5},
}

RESOLVED_CONFIG_FILE = "resolved_config.json"


class RunConfig(BaseSettings):
    """Fully resolved run configuration; unknown keys are rejected."""

    model_config = SettingsConfigDict(
        env_prefix="GEMREC_",
        case_sensitive=False,
        extra="forbid",
    )

    # Run
    preset: PresetName = Field(default="main", description="Policy preset")
    seed: int = Field(default=0, ge=0, description="Global seed")
    out_dir: Path = Field(default=Path("runs/default"), description="Artifact directory")

    # Semantic index
    depth: int = Field(default=3, ge=1, description="Semantic ID depth D")
    codebook_size: int = Field(default=16, ge=2, description="Codebook size C")
    embedding_dim: int = Field(default=16, ge=2, description="Embedding dimension E")
    kmeans_iterations: int = Field(default=50, ge=1, description="Lloyd iterations per level")
    kmeans_restarts: int = Field(default=3, ge=1, description="k-means restarts per level")

    # Embedding mixture
    n_categories: int = Field(default=8, ge=1)
    n_subcategories: int = Field(default=4, ge=1)
    category_scale: float = Field(default=4.0, gt=0.0)
    subcategory_scale: float = Field(default=1.5, ge=0.0)
    noise_scale: float = Field(default=0.5, ge=0.0)

    # Corpus
    n_items: int = Field(default=2000, ge=2)
    n_users: int = Field(default=5000, ge=0)
    history_min: int = Field(default=5, ge=1)
    history_max: int = Field(default=20, ge=1)
    category_bias: float = Field(default=0.9, ge=0.0, le=1.0)
    walk_locality: float = Field(
        default=0.5, ge=0.0, le=1.0, description="Chance a history step stays near the last item"
    )

    # Marketplace
    sponsored_fraction: float = Field(default=0.20, ge=0.0, le=1.0)
    mu: float = Field(default=0.0, description="Log-normal bid location")
    sigma: float = Field(default=0.2, gt=0.0, description="Log-normal bid scale")
    tau: float = Field(default=0.1, gt=0.0, description="Auction softmax temperature")
    p: float = Field(default=0.4, ge=0.0, le=1.0, description="Base ad acceptance rate")
    r: float = Field(default=0.05, gt=0.0, description="Ad fatigue recovery rate")
    d: int = Field(default=2, ge=1, description="Relevance prefix depth")
    shock_fraction: float = Field(default=0.05, gt=0.0, le=1.0)
    shock_multiplier: float = Field(default=10.0, gt=0.0)

    # Sequence model
    order: int = Field(default=4, ge=0, description="Back-off context length m")
    alpha: float = Field(default=0.1, gt=0.0, description="Additive smoothing constant")

    # Decoding
    lambda_grid: list[float] = Field(default=[0.0, 0.5, 1.0, 2.0, 5.0, 7.5, 10.0])
    lambda_value: float = Field(default=1.0, ge=0.0, description="Lambda for single decodes")
    lambda_slot: Optional[float] = Field(default=None, ge=0.0)
    lambda_item: Optional[float] = Field(default=None, ge=0.0)
    beam_width: int = Field(default=10, ge=1, description="Beam width K")
    flag_mode: FlagMode = Field(default=FlagMode.SAMPLE)
    trie_constrained: bool = Field(default=True)

    # Evaluation
    eval_users: Optional[int] = Field(default=1000, ge=1, description="Cap on evaluated users")
    top_k: int = Field(default=10, ge=1)

    # Audit
    audit_instances: int = Field(default=20, ge=1)
    audit_contexts: int = Field(default=20, ge=1)
    audit_grid_points: int = Field(default=50, ge=2)
    audit_oracle_models: int = Field(default=100, ge=1)
    audit_integrity_contexts: int = Field(default=1000, ge=1)
    audit_ad_free_max_rate: float = Field(
        default=0.01, gt=0, le=1, description="Bound on the ad-free model's lambda=0 ad rate"
    )

    # Logging
    log_level: str = Field(default="WARNING", description="Logging level")
    log_file: Optional[Path] = Field(default=None, description="Path to log file")
    json_logs: bool = Field(default=False)

    @field_validator("lambda_grid", mode="before")
    @classmethod
    def parse_grid(cls, v: str | list[float]) -> list[float]:
        """Parse a comma-separated lambda grid."""
        if isinstance(v, str):
            return [float(x) for x in v.split(",") if x.strip()]
        return v

    @field_validator("lambda_grid")
    @classmethod
    def validate_grid(cls, v: list[float]) -> list[float]:
        """Lambda grid must be nonempty and nonnegative; it is stored sorted and unique."""
        if not v:
            raise ValueError("lambda_grid must not be empty")
        if any(x < 0 for x in v):
            raise ValueError("lambda_grid values must be >= 0")
        return sorted(set(v))

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @model_validator(mode="after")
    def validate_cross_fields(self) -> "RunConfig":
        """Check parameters that constrain each other."""
        if self.history_max < self.history_min:
            raise ValueError("history_max must be >= history_min")
        if self.d > self.depth:
            raise ValueError("d must be <= depth")
        return self

    @property
    def data_dir(self) -> Path:
        return self.out_dir / "data"

    @property
    def model_dir(self) -> Path:
        return self.out_dir / "model"

    @property
    def report_dir(self) -> Path:
        return self.out_dir / "reports"

    def policy_params(self) -> PolicyParams:
        return PolicyParams(
            prefix_depth=self.d, tau=self.tau, accept_rate=self.p, recovery_rate=self.r
        )

    def decode_config(self, lam: Optional[float] = None, **overrides: Any) -> DecodeConfig:
        """
        Build a DecodeConfig from this run's decoding settings.

        Args:
            lam: Lambda (defaults to lambda_value)
            **overrides: DecodeConfig fields to replace
        """
        values: dict[str, Any] = {
            "lam": self.lambda_value if lam is None else lam,
            "beam_width": self.beam_width,
            "lambda_slot": self.lambda_slot,
            "lambda_item": self.lambda_item,
            "flag_mode": self.flag_mode,
            "seed": self.seed,
            "trie_constrained": self.trie_constrained,
        }
        values.update(overrides)
        return DecodeConfig(**values)

    def resolved(self) -> dict[str, Any]:
        """JSON-ready dump that is itself a valid --config input."""
        return self.model_dump(mode="json")

    def write_resolved(self, directory: Path) -> Path:
        """
        Echo the resolved config next to the artifacts in `directory`.

        Raises:
            ArtifactError: If the file cannot be written
        """
        path = directory / RESOLVED_CONFIG_FILE
        try:
            directory.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.resolved(), f, sort_keys=True, indent=2)
                f.write("\n")
        except OSError as e:
            raise ArtifactError(f"Cannot write resolved config: {e}", path=str(path)) from e
        return path

    def ensure_out_dir(self) -> None:
        """Create output directories if they don't exist."""
        for directory in (self.data_dir, self.model_dir, self.report_dir):
            directory.mkdir(parents=True, exist_ok=True)


def read_config_file(path: Path) -> dict[str, Any]:
    """
    Read a JSON config file.

    Raises:
        ConfigurationError: If the file cannot be read or is not a JSON object
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read config file: {e}", path=str(path)) from e
    if not isinstance(data, dict):
        raise ConfigurationError("Config file must hold a JSON object", path=str(path))
    return data


def load_run_config(
    preset: Optional[str] = None,
    config_file: Optional[Path] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> RunConfig:
    """
    Resolve configuration: defaults < preset < config file < explicit overrides.

    Args:
        preset: Preset name; falls back to the file's preset, then "main"
        config_file: Optional JSON config (e.g. an echoed resolved_config.json)
        overrides: Explicit values, typically CLI flags (None values are ignored)

    Returns:
        Validated RunConfig

    Raises:
        ConfigurationError: On unknown keys, invalid values or unreadable files
    """
    file_values = read_config_file(config_file) if config_file else {}
    explicit = {k: v for k, v in (overrides or {}).items() if v is not None}
    name = preset or explicit.get("preset") or file_values.get("preset") or "main"
    if name not in PRESETS:
        raise ConfigurationError(f"Unknown preset: {name}", choices=sorted(PRESETS))

    merged: dict[str, Any] = {**PRESETS[name], **file_values, **explicit, "preset": name}
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}", source=str(config_file)) from e
