from typing import List

from pydantic import Field, field_validator

from src.constants import DEFAULT_K_SET
from src.schemas.common import LossVariant, QueryMode
from src.schemas.schema_base import ConfigBase, SchemaBase


class LossConfig(ConfigBase):
    k_set: List[int] = Field(default_factory=lambda: list(DEFAULT_K_SET))
    tau1: float = Field(default=0.05, gt=0)  # rank sharpness
    tau2: float = Field(default=0.25, gt=0)  # threshold sharpness
    variant: LossVariant = LossVariant.SURROGATE
    temperature: float = Field(default=0.07, gt=0)

    @field_validator("k_set")
    @classmethod
    def check_k_set(cls, k_set: List[int]) -> List[int]:
        if not k_set:
            raise ValueError("k_set must not be empty")
        if any(k <= 0 for k in k_set):
            raise ValueError("k values must be positive")
        if k_set != sorted(set(k_set)):
            raise ValueError("k values must be sorted and unique")
        return k_set


class LrSchedule(ConfigBase):
    lr0: float = Field(default=5e-5, gt=0)
    decay: float = Field(default=0.93, gt=0, le=1)
    floor: float = Field(default=1e-6, ge=0)


class OptimizerConfig(ConfigBase):
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.05, ge=0)


class TrainConfig(ConfigBase):
    """Epoch loop settings. Full scale runs use batch 2048 for 6 epochs."""

    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=20, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    rq_enabled: bool = True
    freeze_vit: bool = False
    # standard, or a single-modality baseline (text_only / image_only)
    query_mode: QueryMode = QueryMode.STANDARD
    schedule: LrSchedule = Field(default_factory=LrSchedule)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    loss: LossConfig = Field(default_factory=LossConfig)

    @field_validator("query_mode")
    @classmethod
    def check_query_mode(cls, mode: QueryMode) -> QueryMode:
        if mode == QueryMode.REVERSE:
            raise ValueError("reverse samples come from rq_enabled, not query_mode")
        return mode

    @property
    def reverse_samples(self) -> bool:
        """Reverse samples exist only in standard-mode training."""
        return self.rq_enabled and self.query_mode == QueryMode.STANDARD


class EpochReport(SchemaBase):
    epoch: int
    mean_loss: float
    lr: float
    wall_ms: float
    seed: int
    samples: int
