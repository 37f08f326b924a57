"""
Cấu hình ứng dụng sử dụng pydantic-settings
Runtime settings come from environment variables and the .env file,
experiment settings from a TOML file merged with command-line overrides
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource

from app.core.exceptions import ConfigError


class Settings(BaseSettings):
    """Cấu hình chính của ứng dụng"""

    # Cấu hình cơ bản
    app_env: Literal["local", "dev", "prod"] = "local"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_dir: str = Field(default="logs", description="Directory for JSON log sinks")

    # Torch intra-op threads; 1 keeps float reductions in a fixed order
    num_threads: int = Field(default=1, ge=1, description="torch CPU threads")

    # Thông tin phiên bản (sẽ được override bởi CI/CD)
    version: str = Field(default="0.1.0-dev", description="Phiên bản ứng dụng")

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", case_sensitive=False, extra="ignore"
    )


class LossWeights(BaseModel):
    """Loss term weights"""

    normal: float = Field(default=0.01, ge=0.0, description="lambda_normal inside the reconstruction term")
    unit: float = Field(default=0.1, ge=0.0, description="lambda_unit")
    lim: float = Field(default=1.0, ge=0.0, description="lambda_lim")
    sec: float = Field(default=0.01, ge=0.0, description="lambda_sec")
    perim: float = Field(default=0.001, ge=0.0, description="lambda_perim")


class TrainConfig(BaseModel):
    """Optimization schedule, sampling and model options"""

    epochs: int = Field(default=5000, gt=0)
    lr: float = Field(default=1e-3, gt=0.0)
    lr_decay: float = Field(default=0.3, gt=0.0, lt=1.0)
    lr_milestones: List[int] = Field(default_factory=lambda: [1000, 2000, 3000])
    frames_per_batch: int = Field(default=4, ge=1)
    seed: int = 0
    weights: LossWeights = Field(default_factory=LossWeights)
    part_count: Optional[int] = Field(default=None, ge=1, description="Must match the skeleton bone count")

    # Sampling
    surface_points: int = Field(default=5000, ge=1)
    local_points: int = Field(default=5000, ge=0)
    global_points: int = Field(default=5000, ge=0)
    sigma_local: float = Field(default=0.1, ge=0.0)
    box_scale: float = Field(default=1.5, gt=0.0)

    # Model
    hidden_width: int = Field(default=64, ge=4)
    act_beta: float = Field(default=100.0, gt=0.0, description="Softplus steepness")
    coord_scale: float = Field(default=0.1, gt=0.0, description="Local coordinates are divided by this before the trunk")
    init_radius: float = Field(default=0.01, gt=0.0)
    union_beta: float = Field(default=200.0, gt=0.0)
    perim_beta: float = Field(default=10.0, gt=0.0)
    union_train: Literal["smooth", "min", "softmin"] = "smooth"
    aps: bool = True
    q_ratio: Literal["length", "inverse"] = "length"
    rigidness_geometry: Literal["posed", "rest"] = "posed"
    alpha_init: float = 2.0
    beta_init: float = 0.0

    # Plumbing
    checkpoint_every: int = Field(default=500, ge=1)
    log_every: int = Field(default=100, ge=1)
    divergence_threshold: float = Field(default=1e6, gt=0.0)

    @field_validator("lr_milestones")
    @classmethod
    def _sorted_milestones(cls, value: List[int]) -> List[int]:
        if any(m <= 0 for m in value) or sorted(value) != list(value):
            raise ValueError("lr_milestones must be positive and increasing")
        return value


class ExperimentConfig(BaseSettings):
    """
    Everything a train/reconstruct run needs

    Loaded from a TOML file (tables [train] and [train.weights] map to the
    nested models) with flag overrides applied on top.
    """

    dataset: Path = Path("data/synthetic")
    output: Path = Path("artifacts/run")
    train: TrainConfig = Field(default_factory=TrainConfig)
    resolution: int = Field(default=64, ge=8, description="Marching cubes grid resolution")
    union_extract: Literal["min", "smooth", "softmin"] = "min"
    split: str = "train"

    model_config = SettingsConfigDict(env_prefix="UNIF_", case_sensitive=False, extra="forbid")

    @model_validator(mode="after")
    def _output_creatable(self) -> "ExperimentConfig":
        parent = self.output
        while not parent.exists() and parent != parent.parent:
            parent = parent.parent
        if parent.exists() and not parent.is_dir():
            raise ValueError(f"output path is under a file: {parent}")
        return self

    @classmethod
    def load(cls, config_file: Optional[str | Path] = None, **overrides: Any) -> "ExperimentConfig":
        """
        Build a config from an optional TOML file and flag overrides

        Args:
            config_file: TOML file path, or None for the defaults
            **overrides: Flag values; nested keys use dicts ({"train": {"epochs": 10}})

        Returns:
            Validated ExperimentConfig
        """
        data: Dict[str, Any] = {}
        if config_file is not None:
            config_file = Path(config_file)
            if not config_file.exists():
                raise ConfigError(f"Config file not found: {config_file}")
            try:
                data = dict(TomlConfigSettingsSource(cls, toml_file=config_file)())
            except Exception as e:
                raise ConfigError(f"Cannot read config file {config_file}: {e}") from e

        merged = _deep_merge(data, _drop_none(overrides))
        try:
            return cls(**merged)
        except ValidationError as e:
            raise ConfigError(str(e)) from e


def _drop_none(values: Dict[str, Any]) -> Dict[str, Any]:
    cleaned = {}
    for key, value in values.items():
        if isinstance(value, dict):
            value = _drop_none(value)
            if not value:
                continue
        elif value is None:
            continue
        cleaned[key] = value
    return cleaned


def _deep_merge(base: Dict[str, Any], top: Dict[str, Any]) -> Dict[str, Any]:
    """Merge top into base; values in top win"""
    merged = dict(base)
    for key, value in top.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


# Global settings instance
settings = Settings()
