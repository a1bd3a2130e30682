from typing import List

from src.schemas.schema_base import SchemaBase


class ScoredId(SchemaBase):
    id: str
    score: float


class SearchResult(SchemaBase):
    hits: List[ScoredId]

    def ids(self) -> List[str]:
        return [h.id for h in self.hits]
