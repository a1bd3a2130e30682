from typing import Dict, List, Optional, Tuple

from pydantic import field_validator

from src.schemas.common import Modality
from src.schemas.schema_base import SchemaBase


class RedundancyCurve(SchemaBase):
    modality: Modality
    points: List[Tuple[int, float]]

    @field_validator("points")
    @classmethod
    def check_grid(cls, points: List[Tuple[int, float]]):
        ks = [k for k, _ in points]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("K grid must be strictly increasing")
        return points


class PurifiedSubset(SchemaBase):
    n: int
    retained: List[str]


class SweepRow(SchemaBase):
    n: int
    subset_size: int
    avg_recall: Optional[float]
    recall: Dict[int, float]
    empty: bool = False


class SweepTable(SchemaBase):
    rows: List[SweepRow]
    k_set: List[int]
    degenerate: bool = False
