from typing import List

from src.schemas.schema_base import SchemaBase


class Heatmap(SchemaBase):
    window: int
    stride: int
    base_similarity: float
    # grid[row][col]: similarity drop when that window is blacked out
    grid: List[List[float]]


class TokenScore(SchemaBase):
    token: str
    token_id: int
    score: float
    special: bool
