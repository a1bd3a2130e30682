"""Exact cosine search over an id-addressed embedding corpus.

Scores are dot products of unit rows with the unit query, accumulated in
float64. Results are ordered by descending score, ties by ascending insertion
index; `rank_of` counts with the same rule, so rank 1 is always `top_k`'s first
hit.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from src.adapters.storage.cemb import read_cemb, write_cemb
from src.constants import SEARCH_CHUNK_ROWS
from src.errors import BuildError, ContractError, DegenerateVectorError, UnknownIdError
from src.schemas.search import ScoredId, SearchResult

NORM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class EmbeddingIndex:
    ids: List[str]
    matrix: np.ndarray  # count x dim float32, unit rows
    rows: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def count(self) -> int:
        return int(self.matrix.shape[0])

    def row(self, image_id: str) -> int:
        try:
            return self.rows[image_id]
        except KeyError as e:
            raise UnknownIdError(f"id {image_id!r} not in index") from e

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.rows


def build_index(entries: Iterable[Tuple[str, np.ndarray]]) -> EmbeddingIndex:
    ids: List[str] = []
    rows: dict[str, int] = {}
    vectors = []
    dim = None
    for image_id, vector in entries:
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if image_id in rows:
            raise BuildError(f"duplicate id {image_id!r}")
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise BuildError(f"entry {image_id!r} has dim {vector.size}, expected {dim}")
        norm = np.linalg.norm(vector)
        if not np.isfinite(norm) or norm == 0.0:
            raise BuildError(f"entry {image_id!r} is a zero or non-finite vector")
        rows[image_id] = len(ids)
        ids.append(image_id)
        vectors.append(vector / norm)
    if dim is None:
        return EmbeddingIndex([], np.zeros((0, 0), dtype=np.float32), {})
    matrix = np.ascontiguousarray(np.stack(vectors).astype(np.float32))
    return EmbeddingIndex(ids, matrix, rows)


def index_from_matrix(ids: Sequence[str], matrix: np.ndarray) -> EmbeddingIndex:
    return build_index(zip(ids, np.asarray(matrix)))


def _unit_query(index: EmbeddingIndex, query) -> np.ndarray:
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.size != index.dim:
        raise ContractError(
            f"query dim {query.size} does not match index dim {index.dim}"
        )
    norm = np.linalg.norm(query)
    if not np.isfinite(norm) or norm == 0.0:
        raise DegenerateVectorError("query vector is zero or non-finite")
    return query / norm


def scores(index: EmbeddingIndex, query) -> np.ndarray:
    """Cosine of the query against every row, float64, in insertion order."""
    q = _unit_query(index, query)
    out = np.empty(index.count, dtype=np.float64)
    for start in range(0, index.count, SEARCH_CHUNK_ROWS):
        chunk = index.matrix[start : start + SEARCH_CHUNK_ROWS]
        out[start : start + len(chunk)] = chunk.astype(np.float64) @ q
    return out


def _ordered(candidates: np.ndarray, values: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary
    return candidates[np.lexsort((candidates, -values[candidates]))]


def top_k(index: EmbeddingIndex, query, k: int) -> SearchResult:
    if k < 1:
        raise ContractError(f"K must be at least 1, got {k}")
    values = scores(index, query)
    if k >= index.count:
        order = _ordered(np.arange(index.count), values)
    else:
        # bounded selection; every row tied with the K-th score stays a candidate
        threshold = values[np.argpartition(-values, k - 1)[k - 1]]
        candidates = np.flatnonzero(values >= threshold)
        order = _ordered(candidates, values)[:k]
    hits = [ScoredId(id=index.ids[i], score=float(values[i])) for i in order]
    return SearchResult(hits=hits)


def rank_of(index: EmbeddingIndex, query, target_id: str) -> int:
    """1-based rank of `target_id` under the top_k ordering."""
    row = index.row(target_id)
    values = scores(index, query)
    target = values[row]
    ahead = np.count_nonzero(values > target)
    ahead += np.count_nonzero(values[:row] == target)
    return int(ahead) + 1


def ranks_of(
    index: EmbeddingIndex,
    queries: np.ndarray,
    target_ids: Sequence[str],
    threads: int = 1,
) -> List[int]:
    """Ranks for many queries; results are in query order regardless of threads."""
    if len(queries) != len(target_ids):
        raise ContractError(f"{len(queries)} queries for {len(target_ids)} targets")
    pairs = list(zip(queries, target_ids))
    if threads <= 1:
        return [rank_of(index, q, t) for q, t in pairs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: rank_of(index, p[0], p[1]), pairs))


def search_many(
    index: EmbeddingIndex, queries: np.ndarray, k: int, threads: int = 1
) -> List[SearchResult]:
    if threads <= 1:
        return [top_k(index, q, k) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: top_k(index, q, k), queries))


def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    write_cemb(path, index.ids, index.matrix)


def load_index(path: str | Path) -> EmbeddingIndex:
    """Load a CEMB file; rows that are not unit-norm (external vectors) are normalized."""
    ids, matrix = read_cemb(path)
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    if len(set(ids)) == len(ids) and np.all(np.abs(norms - 1.0) <= NORM_TOLERANCE):
        rows = {image_id: i for i, image_id in enumerate(ids)}
        return EmbeddingIndex(list(ids), matrix, rows)
    return index_from_matrix(ids, matrix)
