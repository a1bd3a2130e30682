"""Modality-redundancy analysis.

`unimodal_curve` measures how far a single modality gets on its own.
`purify` removes the queries a filtering retriever already solves within its
top n, and `redundancy_sweep` re-scores a method on those purified subsets.
"""

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from src.constants import DEFAULT_K_SET, DEFAULT_N_GRID
from src.errors import ContractError, IngestionError
from src.handlers.metrics import recall_at_k
from src.handlers.retrieval import EmbeddingIndex, index_from_matrix, ranks_of
from src.helpers.common import write_csv
from src.helpers.toy_embedders import BowTextEmbedder, MeanPixelEmbedder
from src.schemas.common import Modality
from src.schemas.redundancy import PurifiedSubset, RedundancyCurve, SweepRow, SweepTable
from src.schemas.triplet import CorpusManifest, Triplet


def rank_map(
    queries: np.ndarray,
    triplets: Sequence[Triplet],
    index: EmbeddingIndex,
    threads: int = 1,
) -> dict[str, int]:
    """qid -> rank of the triplet's target under the given query embeddings."""
    missing = sorted({t.target_image for t in triplets if t.target_image not in index})
    if missing:
        raise IngestionError(f"targets missing from corpus: {', '.join(missing[:20])}")
    ranks = ranks_of(index, queries, [t.target_image for t in triplets], threads)
    return {t.qid: r for t, r in zip(triplets, ranks)}


def unimodal_curve(
    queries: np.ndarray,
    index: EmbeddingIndex,
    target_ids: Sequence[str],
    k_grid: Sequence[int],
    modality: Modality = Modality.REFERENCE,
    threads: int = 1,
) -> RedundancyCurve:
    missing = sorted({t for t in target_ids if t not in index})
    if missing:
        raise IngestionError(f"targets missing from corpus: {', '.join(missing[:20])}")
    ranks = ranks_of(index, queries, list(target_ids), threads)
    return RedundancyCurve(
        modality=modality, points=[(k, recall_at_k(ranks, k)) for k in k_grid]
    )


def purify(
    query_ids: Sequence[str], filter_ranks: Mapping[str, int], n: int
) -> PurifiedSubset:
    """V_n: the queries whose target the filter does NOT place within its top n."""
    if n < 0:
        raise ContractError(f"n must be non-negative, got {n}")
    uncovered = [q for q in query_ids if q not in filter_ranks]
    if uncovered:
        missing = ", ".join(uncovered[:20])
        raise ContractError(f"filter ranks missing for queries: {missing}")
    return PurifiedSubset(n=n, retained=[q for q in query_ids if filter_ranks[q] > n])


def redundancy_sweep(
    method_ranks: Mapping[str, int],
    filter_ranks: Mapping[str, int],
    n_grid: Sequence[int] = tuple(DEFAULT_N_GRID),
    k_set: Sequence[int] = tuple(DEFAULT_K_SET),
) -> SweepTable:
    """Mean Recall@K of the method over each V_n.

    Empty subsets are flagged, not averaged.
    """
    query_ids = list(method_ranks)
    uncovered = [q for q in filter_ranks if q not in method_ranks]
    if uncovered:
        missing = ", ".join(uncovered[:20])
        raise ContractError(f"method ranks missing for queries: {missing}")

    rows = []
    for n in n_grid:
        subset = purify(query_ids, filter_ranks, n).retained
        if not subset:
            rows.append(
                SweepRow(n=n, subset_size=0, avg_recall=None, recall={}, empty=True)
            )
            continue
        ranks = [method_ranks[q] for q in subset]
        recall = {k: recall_at_k(ranks, k) for k in k_set}
        rows.append(
            SweepRow(
                n=n,
                subset_size=len(subset),
                avg_recall=float(np.mean(list(recall.values()))),
                recall=recall,
            )
        )
    return SweepTable(rows=rows, k_set=list(k_set), degenerate=all(r.empty for r in rows))


def write_sweep_csv(table: SweepTable, path: str | Path) -> None:
    header = ["n", "subset_size", "avg_recall"] + [f"recall@{k}" for k in table.k_set]
    rows = []
    for row in table.rows:
        if row.empty:
            rows.append([row.n, 0, ""] + [""] * len(table.k_set))
        else:
            rows.append(
                [row.n, row.subset_size, f"{row.avg_recall:.2f}"]
                + [f"{row.recall[k]:.2f}" for k in table.k_set]
            )
    write_csv(path, header, rows)


def write_curves_csv(curves: Sequence[RedundancyCurve], path: str | Path) -> None:
    rows = [[c.modality, k, f"{value:.2f}"] for c in curves for k, value in c.points]
    write_csv(path, ["modality", "K", "recall"], rows)


def text_bow_filter(
    triplets: Sequence[Triplet], manifest: CorpusManifest, image_ids: Sequence[str]
) -> tuple[np.ndarray, EmbeddingIndex]:
    """Query texts against corpus captions, both as bag-of-words vectors."""
    captions = {i.id: i.caption or "" for i in manifest.images}
    embedder = BowTextEmbedder.fit(
        [t.query_text for t in triplets] + [captions[i] for i in image_ids]
    )
    queries = embedder.embed_many([t.query_text for t in triplets])
    corpus = embedder.embed_many([captions[i] for i in image_ids])
    return queries, index_from_matrix(image_ids, corpus)


def image_pixel_filter(
    triplets: Sequence[Triplet], images: Mapping, image_ids: Sequence[str]
) -> tuple[np.ndarray, EmbeddingIndex]:
    """Query images against corpus images, both as mean-pooled pixels."""
    embedder = MeanPixelEmbedder()
    queries = embedder.embed_many([images[t.query_image] for t in triplets])
    corpus = embedder.embed_many([images[i] for i in image_ids])
    return queries, index_from_matrix(image_ids, corpus)
