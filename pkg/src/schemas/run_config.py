from typing import List, Literal

from pydantic import Field

from src.constants import DEFAULT_K_SET, DEFAULT_N_GRID
from src.schemas.model_config import InitConfig, ModelConfig
from src.schemas.roaming import RoamConfig
from src.schemas.schema_base import ConfigBase
from src.schemas.toy_config import ToyConfig
from src.schemas.training import TrainConfig


class ExplainConfig(ConfigBase):
    window: int = Field(default=8, ge=1)
    stride: int = Field(default=4, ge=1)


class EvalConfig(ConfigBase):
    k_set: List[int] = Field(default_factory=lambda: list(DEFAULT_K_SET))


class RedundancyConfig(ConfigBase):
    n_grid: List[int] = Field(default_factory=lambda: list(DEFAULT_N_GRID))
    k_set: List[int] = Field(default_factory=lambda: list(DEFAULT_K_SET))
    k_grid: List[int] = Field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])


class RunConfig(ConfigBase):
    model: ModelConfig = Field(default_factory=ModelConfig)
    init: InitConfig = Field(default_factory=InitConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    toy: ToyConfig = Field(default_factory=ToyConfig)
    roam: RoamConfig = Field(default_factory=RoamConfig)
    explain: ExplainConfig = Field(default_factory=ExplainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    redundancy: RedundancyConfig = Field(default_factory=RedundancyConfig)
    threads: int = Field(default=1, ge=1)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
