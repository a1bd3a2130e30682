from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from src.constants import DEFAULT_K_SET, SUBSET_SIZE
from src.errors import ContractError, IngestionError
from src.handlers.retrieval import EmbeddingIndex, index_from_matrix, rank_of, ranks_of
from src.helpers.common import write_csv
from src.schemas.eval_report import EvalReport
from src.schemas.triplet import Triplet

SUBSET_K_SET = [1, 2, 3]


def recall_at_k(ranks: Sequence[int], k: int) -> float:
    """Percentage of ranks within the top K."""
    if len(ranks) == 0:
        raise ContractError("recall_at_k needs at least one rank")
    ranks = np.asarray(ranks)
    if (ranks < 1).any():
        raise ContractError("ranks are 1-based")
    return 100.0 * np.count_nonzero(ranks <= k) / len(ranks)


def subset_rank(
    query: np.ndarray,
    candidates: np.ndarray,
    candidate_ids: Sequence[str],
    target_id: str,
) -> int:
    if len(candidate_ids) != SUBSET_SIZE or len(candidates) != SUBSET_SIZE:
        raise ContractError(f"subset must hold exactly {SUBSET_SIZE} candidates")
    if target_id not in candidate_ids:
        raise ContractError(f"target {target_id} is not in the subset")
    return rank_of(index_from_matrix(candidate_ids, candidates), query, target_id)


def subset_recall_at_k(
    query: np.ndarray,
    candidates: np.ndarray,
    candidate_ids: Sequence[str],
    target_id: str,
    k: int,
) -> bool:
    """Hit iff the target ranks within K among its six candidates only."""
    return subset_rank(query, candidates, candidate_ids, target_id) <= k


def _check_targets(triplets: Sequence[Triplet], index: EmbeddingIndex):
    missing = sorted({t.target_image for t in triplets if t.target_image not in index})
    if missing:
        raise IngestionError(f"targets missing from corpus: {', '.join(missing[:20])}")


def _recalls(ranks: Sequence[int], k_set: Sequence[int]) -> Dict[int, float]:
    return {k: recall_at_k(ranks, k) for k in k_set}


def evaluate(
    queries: np.ndarray,
    triplets: Sequence[Triplet],
    index: EmbeddingIndex,
    k_set: Sequence[int] = tuple(DEFAULT_K_SET),
    groups: bool = False,
    threads: int = 1,
) -> EvalReport:
    """Recall@K of query embeddings (row i belongs to triplets[i]) against the corpus.

    With `groups`, per-category recalls and their unweighted mean are added.
    Triplets with a candidate subset also get subset Recall@{1,2,3}.
    """
    if len(queries) != len(triplets):
        raise ContractError(
            f"{len(queries)} query embeddings for {len(triplets)} triplets"
        )
    if not triplets:
        raise ContractError("nothing to evaluate")
    _check_targets(triplets, index)

    ranks = ranks_of(index, queries, [t.target_image for t in triplets], threads)
    report = EvalReport(
        recall=_recalls(ranks, k_set),
        query_count=len(triplets),
        corpus_size=index.count,
    )

    if groups:
        by_category: Dict[str, List[int]] = defaultdict(list)
        for t, rank in zip(triplets, ranks):
            by_category[t.category or "all"].append(rank)
        report.categories = {
            c: _recalls(r, k_set) for c, r in sorted(by_category.items())
        }
        report.category_average = {
            k: float(np.mean([r[k] for r in report.categories.values()])) for k in k_set
        }

    subset_ranks = []
    for query, t in zip(queries, triplets):
        if t.subset is None or any(i not in index for i in t.subset):
            continue
        candidates = index.matrix[[index.row(i) for i in t.subset]]
        subset_ranks.append(subset_rank(query, candidates, t.subset, t.target_image))
    if subset_ranks:
        report.subset_recall = _recalls(subset_ranks, SUBSET_K_SET)
    return report


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    """One row for the whole query set, one per category, and the category Average."""
    ks = sorted(report.recall)
    header = ["scope", "queries"] + [f"R@{k}" for k in ks]
    rows = [["all", report.query_count] + [f"{report.recall[k]:.2f}" for k in ks]]
    for category, recalls in (report.categories or {}).items():
        rows.append([category, ""] + [f"{recalls[k]:.2f}" for k in ks])
    if report.category_average:
        rows.append(["Average", ""] + [f"{report.category_average[k]:.2f}" for k in ks])
    if report.subset_recall:
        header += [f"R_subset@{k}" for k in SUBSET_K_SET]
        rows[0] += [f"{report.subset_recall[k]:.2f}" for k in SUBSET_K_SET]
        for row in rows[1:]:
            row += [""] * len(SUBSET_K_SET)
    write_csv(path, header, rows)
