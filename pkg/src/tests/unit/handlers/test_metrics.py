import numpy as np
import pytest

from src.errors import ContractError, IngestionError
from src.handlers.metrics import (
    evaluate,
    recall_at_k,
    subset_rank,
    subset_recall_at_k,
    write_report_csv,
)
from src.handlers.retrieval import index_from_matrix
from src.tests.unit import make_triplet

CORPUS_IDS = [f"c{i:02d}" for i in range(20)]


@pytest.fixture
def one_hot_index():
    return index_from_matrix(CORPUS_IDS, np.eye(20))


def one_hot(position: int) -> np.ndarray:
    vector = np.zeros(20)
    vector[position] = 1.0
    return vector


def subset_trials(rng, trials: int) -> np.ndarray:
    ids = [f"s{i}" for i in range(6)]
    ranks = []
    for _ in range(trials):
        candidates = rng.normal(size=(6, 8))
        ranks.append(subset_rank(rng.normal(size=8), candidates, ids, ids[0]))
    return np.array(ranks)


class TestRecallAtK:
    def test_hand_example(self):
        assert recall_at_k([1, 3, 7], 5) == pytest.approx(200.0 / 3.0)
        assert recall_at_k([1, 3, 7], 1) == pytest.approx(100.0 / 3.0)
        assert recall_at_k([1, 3, 7], 7) == 100.0

    def test_empty(self):
        with pytest.raises(ContractError):
            recall_at_k([], 1)

    def test_ranks_are_one_based(self):
        with pytest.raises(ContractError):
            recall_at_k([0, 1], 1)

    def test_random_embeddings_give_chance_recall(self):
        rng = np.random.default_rng(0)
        ids = [f"i{n}" for n in range(100)]
        index = index_from_matrix(ids, rng.normal(size=(100, 16)))
        queries = rng.normal(size=(2000, 16))
        triplets = [make_triplet(i, f"i{rng.integers(100)}") for i in range(2000)]
        report = evaluate(queries, triplets, index, k_set=[1, 10, 50])
        assert report.recall[1] == pytest.approx(1.0, abs=0.8)
        assert report.recall[10] == pytest.approx(10.0, abs=2.5)
        assert report.recall[50] == pytest.approx(50.0, abs=4.0)


class TestSubsetRecall:
    def test_random_subsets_give_chance_recall(self):
        ranks = subset_trials(np.random.default_rng(1), 5000)
        for k, expected in [(1, 100 / 6), (2, 200 / 6), (3, 50.0)]:
            assert recall_at_k(ranks, k) == pytest.approx(expected, abs=2.0)

    @pytest.mark.slow
    def test_random_subsets_give_chance_recall_precisely(self):
        ranks = subset_trials(np.random.default_rng(2), 100000)
        for k, expected in [(1, 100 / 6), (2, 200 / 6), (3, 50.0)]:
            assert recall_at_k(ranks, k) == pytest.approx(expected, abs=0.5)

    def test_whole_subset_always_hits(self):
        rng = np.random.default_rng(3)
        ids = [f"s{i}" for i in range(6)]
        for _ in range(50):
            candidates = rng.normal(size=(6, 4))
            assert subset_recall_at_k(rng.normal(size=4), candidates, ids, ids[3], 6)

    def test_subset_size(self):
        with pytest.raises(ContractError):
            subset_rank(np.ones(2), np.eye(2), ["a", "b"], "a")

    def test_target_must_be_in_subset(self):
        ids = [f"s{i}" for i in range(6)]
        with pytest.raises(ContractError):
            subset_rank(np.ones(6), np.eye(6), ids, "elsewhere")


class TestEvaluate:
    def test_self_retrieval_is_perfect(self, one_hot_index):
        triplets = [make_triplet(i, image_id) for i, image_id in enumerate(CORPUS_IDS)]
        report = evaluate(np.eye(20), triplets, one_hot_index, k_set=[1, 5])
        assert report.recall == {1: 100.0, 5: 100.0}
        assert report.query_count == 20 and report.corpus_size == 20
        assert report.categories is None and report.subset_recall is None

    def test_category_average_is_unweighted(self, one_hot_index):
        """Categories count equally in the Average, whatever their size"""
        hits_a = [(0, 0), (1, 5)]
        hits_b = [(2, 2), (3, 9), (4, 10), (6, 11)]
        triplets, queries = [], []
        for category, pairs in [("a", hits_a), ("b", hits_b)]:
            for target, looked_at in pairs:
                i = len(triplets)
                triplets.append(make_triplet(i, CORPUS_IDS[target], category))
                queries.append(one_hot(looked_at))
        report = evaluate(np.stack(queries), triplets, one_hot_index, [1], groups=True)
        assert report.recall[1] == pytest.approx(100.0 / 3.0)
        assert report.categories == {"a": {1: 50.0}, "b": {1: 25.0}}
        assert report.category_average == {1: 37.5}

    def test_uncategorized_triplets_group_as_all(self, one_hot_index):
        triplets = [make_triplet(0, "c00"), make_triplet(1, "c01")]
        report = evaluate(np.eye(20)[:2], triplets, one_hot_index, [1], groups=True)
        assert list(report.categories) == ["all"]

    def test_subset_recall(self, one_hot_index):
        subset = ["c00", "c01", "c02", "c03", "c04", "c05"]
        triplets = [
            make_triplet(0, "c00", subset=subset),
            make_triplet(1, "c01", subset=subset),
        ]
        queries = np.stack([one_hot(0), one_hot(0) + 0.5 * one_hot(1)])
        report = evaluate(queries, triplets, one_hot_index, [1])
        assert report.subset_recall == {1: 50.0, 2: 100.0, 3: 100.0}

    def test_missing_target(self, one_hot_index):
        with pytest.raises(IngestionError):
            evaluate(np.eye(20)[:1], [make_triplet(0, "nowhere")], one_hot_index, [1])

    def test_query_count_mismatch(self, one_hot_index):
        with pytest.raises(ContractError):
            evaluate(np.eye(20)[:2], [make_triplet(0, "c00")], one_hot_index, [1])

    def test_nothing_to_evaluate(self, one_hot_index):
        with pytest.raises(ContractError):
            evaluate(np.zeros((0, 20)), [], one_hot_index, [1])


class TestReport:
    def test_csv(self, one_hot_index, tmp_path):
        triplets = [
            make_triplet(0, "c00", "a"),
            make_triplet(1, "c19", "a"),
            make_triplet(2, "c02", "b"),
        ]
        queries = np.stack([one_hot(0), one_hot(5), one_hot(2)])
        report = evaluate(queries, triplets, one_hot_index, [1, 5], groups=True)
        write_report_csv(report, tmp_path / "report.csv")
        assert (tmp_path / "report.csv").read_text().splitlines() == [
            "scope,queries,R@1,R@5",
            "all,3,66.67,66.67",
            "a,,50.00,50.00",
            "b,,100.00,100.00",
            "Average,,75.00,75.00",
        ]

    def test_serialized_recall_has_two_decimals(self, one_hot_index):
        triplets = [make_triplet(i, f"c{i:02d}") for i in range(3)]
        queries = np.stack([one_hot(0), one_hot(1), one_hot(9)])
        report = evaluate(queries, triplets, one_hot_index, [1])
        assert report.model_dump()["recall"] == {1: 66.67}
