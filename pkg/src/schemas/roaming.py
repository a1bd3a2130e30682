from typing import List, Optional

from pydantic import Field, field_validator, model_validator

from src.constants import PROMPT_HEADER
from src.schemas.common import FilterRule
from src.schemas.schema_base import ConfigBase, SchemaBase


class VqaPair(SchemaBase):
    image_id: str
    question: str
    answer: str
    caption: Optional[str] = None

    @field_validator("question", "answer")
    @classmethod
    def not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("must not be empty")
        return value


class ComplementaryPair(SchemaBase):
    """(I, Q, A) and its complement (I_c, Q, A_c).

    Same-image pairs are accepted here and dropped by the roaming filter so the
    drop can be logged with its reason.
    """

    id: str
    original: VqaPair
    complement: VqaPair

    @model_validator(mode="after")
    def check_complement(self):
        if self.original.question != self.complement.question:
            raise ValueError("complementary pair must share the question")
        if self.original.answer == self.complement.answer:
            raise ValueError("complementary answers must differ")
        return self


class VqaRecord(SchemaBase):
    """Input record layout of the VQA JSON file."""

    image_id: str
    question: str
    answer: str
    complement_image_id: str
    complement_answer: str
    caption: Optional[str] = None
    complement_caption: Optional[str] = None

    def to_pair(self, pair_id: str) -> ComplementaryPair:
        return ComplementaryPair(
            id=pair_id,
            original=VqaPair(
                image_id=self.image_id,
                question=self.question,
                answer=self.answer,
                caption=self.caption,
            ),
            complement=VqaPair(
                image_id=self.complement_image_id,
                question=self.question,
                answer=self.complement_answer,
                caption=self.complement_caption,
            ),
        )


class PromptExample(SchemaBase):
    question: str
    answer: str
    rephrased: str


class PromptTemplate(SchemaBase):
    header: str = PROMPT_HEADER
    examples: List[PromptExample]

    @model_validator(mode="after")
    def check_template(self):
        if not self.examples:
            raise ValueError("prompt template needs at least one example")
        if self.header != PROMPT_HEADER:
            raise ValueError(f"header must be {PROMPT_HEADER!r}")
        return self


class RoamConfig(ConfigBase):
    min_length: int = Field(default=10, ge=0)
    max_length: int = Field(default=200, gt=0)
    forbidden: List[str] = Field(default_factory=lambda: ["\n", "\t", "=", "Q:"])
    symmetry: bool = True
    caption_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_tokens: int = Field(default=64, gt=0)
    temperature: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.min_length >= self.max_length:
            raise ValueError("min_length must be below max_length")
        return self


class FilterVerdict(SchemaBase):
    keep: bool
    reasons: List[FilterRule] = Field(default_factory=list)


class StatsReport(SchemaBase):
    triplets: int = 0
    corpus_train: int = 0
    corpus_val: int = 0
    unique_tokens: int = 0
    avg_text_chars: float = 0.0
    avg_text_tokens: float = 0.0
