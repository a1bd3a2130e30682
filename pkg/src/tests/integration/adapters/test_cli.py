import json
import os
from pathlib import Path

import numpy as np
import pytest

from src.adapters.cli.main import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, run
from src.adapters.storage.cemb import write_cemb
from src.tests.integration import FIXTURES_PATH

TINY = {
    "toy": {"image_size": 16, "triplets": 16, "corpus": 40, "group_size": 2},
    "model": {
        "image_size": 16,
        "patch_size": 8,
        "d": 8,
        "n_heads": 2,
        "vit_layers": 1,
        "shift_layers": 1,
        "d_e": 8,
        "max_text_len": 12,
        "ffn_mult": 2,
    },
    "train": {"batch_size": 4, "epochs": 1, "schedule": {"lr0": 0.001}},
}


@pytest.fixture(autouse=True)
def no_sentry(monkeypatch):
    monkeypatch.delenv("SENTRY_DSN", raising=False)


@pytest.fixture
def config_path(tmp_path) -> str:
    path = tmp_path / "caselab.json"
    path.write_text(json.dumps(TINY))
    return str(path)


@pytest.fixture
def toy_dir(tmp_path, config_path) -> Path:
    out = tmp_path / "toy"
    assert run(["gen-toy", "--config", config_path, "--out", str(out)]) == EXIT_OK
    return out


def read_lines(path) -> list[str]:
    return Path(path).read_text().splitlines()


def perfect_embeddings(toy_dir: Path, tmp_path: Path) -> tuple[str, str]:
    """Corpus CEMB of random rows plus query CEMB rows equal to each target's row."""
    manifest = json.loads((toy_dir / "manifest.json").read_text())
    ids = [image["id"] for image in manifest["images"]]
    matrix = np.random.default_rng(0).normal(size=(len(ids), 16))
    rows = {image_id: i for i, image_id in enumerate(ids)}
    triplets = [json.loads(line) for line in read_lines(toy_dir / "triplets.jsonl")]
    queries = matrix[[rows[t["target_image"]] for t in triplets]]
    write_cemb(tmp_path / "index.cemb", ids, matrix)
    write_cemb(tmp_path / "queries.cemb", [t["qid"] for t in triplets], queries)
    return str(tmp_path / "index.cemb"), str(tmp_path / "queries.cemb")


class TestGenToy:
    def test_same_seed_same_tree(self, tmp_path, config_path):
        for name in ["a", "b"]:
            argv = ["gen-toy", "--config", config_path, "--seed", "5"]
            assert run(argv + ["--out", str(tmp_path / name)]) == EXIT_OK
        root = tmp_path / "a"
        files = sorted(p.relative_to(root) for p in root.rglob("*"))
        assert len(files) > 2
        for relative in files:
            if (tmp_path / "a" / relative).is_file():
                first = (tmp_path / "a" / relative).read_bytes()
                assert first == (tmp_path / "b" / relative).read_bytes()

    def test_flags_override_config(self, tmp_path, config_path):
        argv = ["gen-toy", "--config", config_path, "--triplets", "8"]
        assert run(argv + ["--out", str(tmp_path / "toy")]) == EXIT_OK
        assert len(read_lines(tmp_path / "toy" / "triplets.jsonl")) == 8


class TestEvaluation:
    def test_self_retrieval_is_perfect(self, tmp_path, toy_dir):
        index, queries = perfect_embeddings(toy_dir, tmp_path)
        argv = [
            "eval",
            "--triplets",
            str(toy_dir / "triplets.jsonl"),
            "--index",
            index,
            "--queries",
            queries,
            "--k",
            "1,5",
            "--groups",
            "--out",
            str(tmp_path / "report.json"),
            "--csv",
            str(tmp_path / "report.csv"),
        ]
        assert run(argv) == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["recall"] == {"1": 100.0, "5": 100.0}
        assert report["query_count"] == 16
        assert read_lines(tmp_path / "report.csv")[:2] == [
            "scope,queries,R@1,R@5",
            "all,16,100.00,100.00",
        ]

    def test_sweep(self, tmp_path, toy_dir):
        index, queries = perfect_embeddings(toy_dir, tmp_path)
        argv = [
            "redundancy",
            "sweep",
            "--triplets",
            str(toy_dir / "triplets.jsonl"),
            "--manifest",
            str(toy_dir / "manifest.json"),
            "--method-queries",
            queries,
            "--method-index",
            index,
            "--n",
            "0,1",
            "--k",
            "1",
            "--csv",
            str(tmp_path / "sweep.csv"),
        ]
        assert run(argv) == EXIT_OK
        lines = read_lines(tmp_path / "sweep.csv")
        assert lines[:2] == ["n,subset_size,avg_recall,recall@1", "0,16,100.00,100.00"]
        assert len(lines) == 3

    def test_curves(self, tmp_path, toy_dir):
        argv = [
            "redundancy",
            "curve",
            "--triplets",
            str(toy_dir / "triplets.jsonl"),
            "--manifest",
            str(toy_dir / "manifest.json"),
            "--k-grid",
            "1,5",
            "--csv",
            str(tmp_path / "curves.csv"),
        ]
        assert run(argv) == EXIT_OK
        lines = read_lines(tmp_path / "curves.csv")
        assert lines[0] == "modality,K,recall"
        assert [line.split(",")[0] for line in lines[1:]] == [
            "text-only",
            "text-only",
            "image-only",
            "image-only",
        ]


class TestModelCommands:
    def test_train_embed_eval_explain(self, tmp_path, config_path, toy_dir):
        data = [
            "--triplets",
            str(toy_dir / "triplets.jsonl"),
            "--manifest",
            str(toy_dir / "manifest.json"),
        ]
        checkpoint = str(tmp_path / "model.ckpt")
        argv = ["train", "--config", config_path, *data, "--out", checkpoint]
        assert run(argv + ["--report", str(tmp_path / "epochs.jsonl")]) == EXIT_OK
        assert len(read_lines(tmp_path / "epochs.jsonl")) == 1

        index, queries = str(tmp_path / "corpus.cemb"), str(tmp_path / "q.cemb")
        argv = ["embed", "--checkpoint", checkpoint, "--out", index, *data]
        assert run(argv + ["--queries-out", queries]) == EXIT_OK

        argv = ["eval", *data, "--index", index, "--queries", queries]
        assert run(argv + ["--out", str(tmp_path / "report.json")]) == EXIT_OK
        recall = json.loads((tmp_path / "report.json").read_text())["recall"]
        assert set(recall) == {"1", "5", "10", "50"}
        assert 0.0 <= recall["1"] <= recall["50"] <= 100.0

        argv = ["eval", *data, "--index", index, "--checkpoint", checkpoint]
        assert run(argv + ["--out", str(tmp_path / "again.json")]) == EXIT_OK
        again = json.loads((tmp_path / "again.json").read_text())["recall"]
        assert again == recall

        argv = ["explain", *data, "--checkpoint", checkpoint, "--qid", "q000000"]
        out, overlay = str(tmp_path / "explain.json"), str(tmp_path / "heat.ppm")
        assert run(argv + ["--out", out, "--overlay", overlay]) == EXIT_OK
        explanation = json.loads(Path(out).read_text())
        assert len(explanation["heatmap"]["grid"]) == 3
        assert explanation["tokens"][0]["token"] == "[CLS]"
        assert Path(overlay).read_bytes().startswith(b"P6\n16 16\n255\n")

    def test_train_text_only_baseline(self, tmp_path, config_path, toy_dir):
        data = [
            "--triplets",
            str(toy_dir / "triplets.jsonl"),
            "--manifest",
            str(toy_dir / "manifest.json"),
        ]
        samples = {}
        for mode in ["standard", "text_only"]:
            report = tmp_path / f"{mode}.jsonl"
            argv = ["train", "--config", config_path, *data, "--mode", mode]
            argv += ["--out", str(tmp_path / f"{mode}.ckpt"), "--report", str(report)]
            assert run(argv) == EXIT_OK
            samples[mode] = json.loads(read_lines(report)[0])["samples"]
        assert samples["standard"] == 2 * samples["text_only"]

    def test_retrieve(self, tmp_path, config_path, toy_dir, capsys):
        data = [
            "--triplets",
            str(toy_dir / "triplets.jsonl"),
            "--manifest",
            str(toy_dir / "manifest.json"),
        ]
        checkpoint = str(tmp_path / "model.ckpt")
        argv = ["train", "--config", config_path, *data, "--out", checkpoint]
        assert run(argv + ["--epochs", "1"]) == EXIT_OK
        index = str(tmp_path / "corpus.cemb")
        manifest = str(toy_dir / "manifest.json")
        argv = ["embed", "--checkpoint", checkpoint, "--manifest", manifest]
        assert run(argv + ["--out", index]) == EXIT_OK
        capsys.readouterr()
        argv = ["retrieve", "--checkpoint", checkpoint, "--index", index]
        argv += ["--manifest", manifest, "--image", "img000000", "--text", "remove"]
        assert run(argv + ["--k", "3"]) == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert len(result["hits"]) == 3


class TestDatasetCommands:
    def test_roam_with_mock(self, tmp_path):
        out, audit = tmp_path / "roamed.jsonl", tmp_path / "audit.jsonl"
        pairs = os.path.join(FIXTURES_PATH, "roaming", "vqa_pairs.json")
        argv = ["roam", "run", "--pairs", pairs, "--mock"]
        assert run(argv + ["--out", str(out), "--audit", str(audit)]) == EXIT_OK
        triplets = [json.loads(line) for line in read_lines(out)]
        assert len(triplets) == 18
        assert triplets[0]["query_text"] == "Make the sky cloudy"
        assert len(read_lines(audit)) == 18

    def test_roam_sample(self, tmp_path, toy_dir):
        argv = ["roam", "sample", "--triplets", str(toy_dir / "triplets.jsonl")]
        argv += ["--count", "5", "--out", str(tmp_path / "sheet.csv")]
        assert run(argv) == EXIT_OK
        assert len(read_lines(tmp_path / "sheet.csv")) == 6

    def test_stats(self, tmp_path, toy_dir):
        argv = ["stats", "--triplets", str(toy_dir / "triplets.jsonl")]
        argv += ["--manifest", str(toy_dir / "manifest.json")]
        assert run(argv + ["--out", str(tmp_path / "stats.json")]) == EXIT_OK
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert stats["triplets"] == 16
        assert stats["corpus_train"] + stats["corpus_val"] >= 40

    def test_convert_fashioniq(self, tmp_path):
        source = tmp_path / "cap.dress.json"
        records = [{"candidate": "c1", "target": "t1", "captions": ["is red", "short"]}]
        source.write_text(json.dumps(records))
        argv = ["convert", "fashioniq", "--input", str(source), "--category", "dress"]
        assert run(argv + ["--out", str(tmp_path / "dress.jsonl")]) == EXIT_OK
        (line,) = read_lines(tmp_path / "dress.jsonl")
        assert json.loads(line) == {
            "category": "dress",
            "qid": "dress-0",
            "query_image": "c1",
            "query_text": "is red and short",
            "target_image": "t1",
        }


class TestExitCodes:
    def test_help(self):
        assert run(["--help"]) == EXIT_OK

    def test_no_command(self):
        assert run([]) == EXIT_USAGE

    def test_missing_required_flag(self):
        assert run(["eval", "--triplets", "t.jsonl"]) == EXIT_USAGE

    def test_bad_k_list(self):
        argv = ["eval", "--triplets", "t", "--index", "i", "--k", "1,x"]
        assert run(argv) == EXIT_USAGE

    def test_eval_without_queries(self, tmp_path, toy_dir):
        index, _ = perfect_embeddings(toy_dir, tmp_path)
        argv = ["eval", "--triplets", str(toy_dir / "triplets.jsonl"), "--index", index]
        assert run(argv) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        argv = ["stats", "--triplets", str(tmp_path / "absent.jsonl")]
        assert run(argv) == EXIT_DOMAIN

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"train": {"epoch": 3}}')
        argv = ["stats", "--config", str(path), "--triplets", "t.jsonl"]
        assert run(argv) == EXIT_DOMAIN

    @pytest.mark.parametrize(
        "records",
        [
            [{"reference": "a", "target_hard": "b", "caption": "x"}],
            [{"pairid": 1, "reference": "a", "target_hard": "a", "caption": "x"}],
        ],
    )
    def test_malformed_cirr_records(self, tmp_path, records):
        source = tmp_path / "cap.json"
        source.write_text(json.dumps(records))
        argv = ["convert", "cirr", "--input", str(source)]
        assert run(argv + ["--out", str(tmp_path / "out.jsonl")]) == EXIT_DOMAIN
        assert not (tmp_path / "out.jsonl").exists()

    def test_reverse_is_not_a_train_mode(self):
        argv = ["train", "--triplets", "t", "--manifest", "m", "--out", "o"]
        assert run(argv + ["--mode", "reverse"]) == EXIT_USAGE
