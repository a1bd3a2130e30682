from typing import Dict, Optional

from pydantic import field_serializer

from src.schemas.schema_base import SchemaBase


def _fixed(value: float) -> float:
    return float(f"{value:.2f}")


class EvalReport(SchemaBase):
    # percentages keyed by K
    recall: Dict[int, float]
    query_count: int
    corpus_size: int
    categories: Optional[Dict[str, Dict[int, float]]] = None
    category_average: Optional[Dict[int, float]] = None
    subset_recall: Optional[Dict[int, float]] = None

    @field_serializer("recall", "category_average", "subset_recall")
    def round_recall(self, values: Optional[Dict[int, float]]):
        if values is None:
            return None
        return {k: _fixed(v) for k, v in values.items()}

    @field_serializer("categories")
    def round_categories(self, values: Optional[Dict[str, Dict[int, float]]]):
        if values is None:
            return None
        return {c: {k: _fixed(v) for k, v in r.items()} for c, r in values.items()}
