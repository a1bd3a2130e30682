"""caselab command line.

Exit codes: 0 success, 1 domain error (CaseLabError), 2 usage error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, List, Sequence

import numpy as np

from src.adapters.cli.config import load_config
from src.adapters.completion.http import HttpCompletionClient
from src.adapters.completion.mock import MockCompletionClient
from src.adapters.doppler import load_doppler_secrets
from src.adapters.logger.sentry import make_logger
from src.adapters.storage.cemb import read_cemb
from src.adapters.storage.checkpoint import load_checkpoint, save_checkpoint
from src.errors import CaseLabError, IngestionError
from src.handlers import datasets, explain, metrics, redundancy, retrieval, roaming
from src.handlers.case_model import CaseModel
from src.handlers.toy_generator import gen_toy
from src.handlers.trainer import Trainer, embed_queries, embed_targets
from src.helpers.common import (
    make_hash,
    parse_int_list,
    versions,
    write_json,
    write_jsonl,
)
from src.helpers.tokenizer import Tokenizer
from src.schemas.common import LossVariant, Modality, QueryMode, RedundancyMode, Split
from src.schemas.run_config import RunConfig

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

FILTERS = ["text_bow", "image_pixel"]


class UsageError(Exception):
    pass


def _int_list(value: str) -> List[int]:
    try:
        values = parse_int_list(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {value!r}"
        ) from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument(
        "--threads", type=int, dest="threads", help="cap on worker threads"
    )
    parser.add_argument(
        "--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="log verbosity",
    )


def _data(parser: argparse.ArgumentParser, manifest_required: bool = True):
    parser.add_argument("--triplets", required=True, help="triplet JSONL file")
    parser.add_argument(
        "--manifest", required=manifest_required, help="corpus manifest JSON"
    )
    parser.add_argument(
        "--split",
        choices=[s.value for s in Split],
        help="restrict queries and corpus to a split",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caselab", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = commands.add_parser("gen-toy", help="generate the synthetic shapes dataset")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, dest="toy.seed", help="generator seed")
    p.add_argument(
        "--mode",
        choices=[m.value for m in RedundancyMode],
        dest="toy.mode",
        help="text mode",
    )
    p.add_argument("--triplets", type=int, dest="toy.triplets", help="number of triplets")
    p.add_argument("--corpus", type=int, dest="toy.corpus", help="minimum corpus size")
    p.add_argument(
        "--group-size", type=int, dest="toy.group_size", help="queries per shared text"
    )
    p.add_argument(
        "--val-fraction", type=float, dest="toy.val_fraction", help="validation share"
    )

    p = commands.add_parser("roam", help="VQA pairs to CoIR triplets")
    actions = p.add_subparsers(dest="action", required=True, metavar="action")
    run = actions.add_parser("run", help="rephrase complementary pairs into triplets")
    _common(run)
    run.add_argument("--pairs", required=True, help="VQA JSON with complementary records")
    run.add_argument("--out", required=True, help="output triplet JSONL")
    run.add_argument("--audit", help="JSONL archive of prompts and raw completions")
    run.add_argument(
        "--mock", action="store_true", help="use the deterministic mock client"
    )
    run.add_argument("--seed", type=int, dest="roam.seed", help="caption mixing seed")
    run.add_argument(
        "--no-symmetry", action="store_false", dest="roam.symmetry", default=None,
        help="emit only (I, S_c, I_c)",
    )
    run.add_argument(
        "--caption-fraction", type=float, dest="roam.caption_fraction",
        help="share of triplets whose text is replaced by the target caption",
    )
    sample = actions.add_parser("sample", help="draw a review sheet for manual checking")
    _common(sample)
    sample.add_argument("--triplets", required=True, help="triplet JSONL")
    sample.add_argument("--count", type=int, default=100, help="rows in the sheet")
    sample.add_argument("--seed", type=int, default=0, help="sampling seed")
    sample.add_argument("--out", required=True, help="output CSV")

    p = commands.add_parser("stats", help="dataset statistics")
    _common(p)
    p.add_argument("--triplets", required=True, help="triplet JSONL")
    p.add_argument("--manifest", help="corpus manifest JSON")
    p.add_argument("--out", help="write the report JSON here")

    p = commands.add_parser("train", help="train the toy CASE model")
    _common(p)
    _data(p)
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--report", help="epoch reports JSONL")
    p.add_argument("--seed", type=int, dest="train.seed", help="shuffling seed")
    p.add_argument("--init-seed", type=int, dest="init.seed", help="parameter init seed")
    p.add_argument("--epochs", type=int, dest="train.epochs", help="number of epochs")
    p.add_argument(
        "--batch-size", type=int, dest="train.batch_size", help="triplets per batch"
    )
    p.add_argument(
        "--lr", type=float, dest="train.schedule.lr0", help="initial learning rate"
    )
    p.add_argument(
        "--loss", choices=[v.value for v in LossVariant], dest="train.loss.variant",
        help="loss variant",
    )
    p.add_argument(
        "--no-rq", action="store_false", dest="train.rq_enabled", default=None,
        help="disable reverse queries",
    )
    p.add_argument(
        "--freeze-vit", action="store_true", dest="train.freeze_vit", default=None,
        help="keep image encoder weights fixed",
    )
    p.add_argument(
        "--mode",
        choices=[m.value for m in QueryMode if m != QueryMode.REVERSE],
        dest="train.query_mode",
        help="train the standard model or a text_only / image_only baseline",
    )

    p = commands.add_parser("embed", help="corpus (and query) embeddings as CEMB")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--manifest", required=True, help="corpus manifest JSON")
    p.add_argument(
        "--split", choices=[s.value for s in Split], help="restrict to a split"
    )
    p.add_argument("--out", required=True, help="corpus CEMB output")
    p.add_argument("--triplets", help="triplet JSONL for query embeddings")
    p.add_argument("--queries-out", help="query CEMB output, keyed by qid")
    p.add_argument(
        "--mode", choices=[m.value for m in QueryMode], default=QueryMode.STANDARD.value,
        help="query mode",
    )

    p = commands.add_parser("retrieve", help="rank corpus ids for one query")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--index", required=True, help="corpus CEMB")
    p.add_argument("--manifest", required=True, help="corpus manifest JSON")
    p.add_argument("--image", required=True, help="query image id")
    p.add_argument("--text", required=True, help="transition text")
    p.add_argument("--k", type=int, default=10, help="results to return")
    p.add_argument(
        "--mode", choices=[m.value for m in QueryMode], default=QueryMode.STANDARD.value,
        help="query mode",
    )

    p = commands.add_parser("eval", help="Recall@K report")
    _common(p)
    _data(p, manifest_required=False)
    p.add_argument("--index", required=True, help="corpus CEMB")
    p.add_argument("--queries", help="query CEMB keyed by qid (instead of --checkpoint)")
    p.add_argument("--checkpoint", help="model checkpoint to embed queries with")
    p.add_argument(
        "--mode", choices=[m.value for m in QueryMode], default=QueryMode.STANDARD.value,
        help="query mode when embedding with --checkpoint",
    )
    p.add_argument("--k", type=_int_list, dest="eval.k_set", help="K set, e.g. 1,5,10,50")
    p.add_argument(
        "--groups", action="store_true", help="per-category breakdown and Average"
    )
    p.add_argument("--out", help="report JSON")
    p.add_argument("--csv", help="report CSV")

    p = commands.add_parser("redundancy", help="modality redundancy analysis")
    analyses = p.add_subparsers(dest="action", required=True, metavar="analysis")
    curve = analyses.add_parser("curve", help="uni-modal Recall@K curves")
    _common(curve)
    _data(curve)
    curve.add_argument(
        "--k-grid", type=_int_list, dest="redundancy.k_grid", help="K grid"
    )
    curve.add_argument("--queries", help="reference query CEMB keyed by qid")
    curve.add_argument("--index", help="reference corpus CEMB")
    curve.add_argument("--out", help="curves JSON")
    curve.add_argument("--csv", help="curves CSV")
    sweep = analyses.add_parser("sweep", help="Recall on purified subsets V_n")
    _common(sweep)
    _data(sweep)
    sweep.add_argument("--n", type=_int_list, dest="redundancy.n_grid", help="n grid")
    sweep.add_argument("--k", type=_int_list, dest="redundancy.k_set", help="K set")
    sweep.add_argument("--filter", choices=FILTERS, default="text_bow", help="toy filter")
    sweep.add_argument("--filter-queries", help="filter query CEMB (overrides --filter)")
    sweep.add_argument("--filter-index", help="filter corpus CEMB")
    sweep.add_argument("--checkpoint", help="method model checkpoint")
    sweep.add_argument(
        "--mode", choices=[m.value for m in QueryMode], default=QueryMode.STANDARD.value,
        help="method query mode when using --checkpoint",
    )
    sweep.add_argument("--method-queries", help="method query CEMB keyed by qid")
    sweep.add_argument("--method-index", help="method corpus CEMB")
    sweep.add_argument("--out", help="sweep JSON")
    sweep.add_argument("--csv", help="sweep CSV")

    p = commands.add_parser("explain", help="mask heatmap and token saliency")
    _common(p)
    _data(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--qid", required=True, help="triplet to explain")
    p.add_argument("--window", type=int, dest="explain.window", help="mask window size")
    p.add_argument("--stride", type=int, dest="explain.stride", help="mask stride")
    p.add_argument("--out", required=True, help="explanation JSON")
    p.add_argument("--overlay", help="heatmap overlay PPM")

    p = commands.add_parser("convert", help="public annotation layouts to triplet JSONL")
    layouts = p.add_subparsers(dest="action", required=True, metavar="layout")
    cirr = layouts.add_parser("cirr", help="CIRR captions file")
    _common(cirr)
    cirr.add_argument("--input", required=True, help="CIRR captions JSON")
    cirr.add_argument("--out", required=True, help="triplet JSONL")
    fiq = layouts.add_parser("fashioniq", help="FashionIQ captions file")
    _common(fiq)
    fiq.add_argument("--input", required=True, help="FashionIQ captions JSON")
    fiq.add_argument("--category", required=True, help="dress, shirt or toptee")
    fiq.add_argument("--out", required=True, help="triplet JSONL")
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    """Nested config overrides from the dotted flag destinations that were given."""
    nested: dict = {}
    for key, value in vars(args).items():
        if value is None or ("." not in key and key not in ("threads", "log_level")):
            continue
        node = nested
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return nested


def _seed(args, config: RunConfig) -> int:
    match args.command:
        case "gen-toy":
            return config.toy.seed
        case "train":
            return config.train.seed
        case "roam":
            return config.roam.seed
    return config.init.seed


# helpers shared by commands


def _select(triplets, corpus, split: str | None):
    if corpus is None or split is None:
        return triplets, (corpus.ids() if corpus else None)
    ids = corpus.ids(Split(split))
    keep = set(ids)
    return [t for t in triplets if t.query_image in keep and t.target_image in keep], ids


def _load(args):
    triplets = datasets.load_triplets(args.triplets)
    manifest = getattr(args, "manifest", None)
    corpus = datasets.load_corpus(manifest) if manifest else None
    triplets, ids = _select(triplets, corpus, getattr(args, "split", None))
    if corpus is not None:
        datasets.check_images_present(triplets, corpus.images)
    return triplets, corpus, ids


def _cemb_rows(path: str, keys: Sequence[str]) -> np.ndarray:
    ids, matrix = read_cemb(path)
    rows = {k: i for i, k in enumerate(ids)}
    missing = [k for k in keys if k not in rows]
    if missing:
        raise IngestionError(f"{path} has no rows for: {', '.join(missing[:20])}")
    return matrix[[rows[k] for k in keys]]


def _emit(data: dict, out: str | None):
    if out:
        write_json(out, data)
    print(json.dumps(data, sort_keys=True, indent=2))


# commands


def cmd_gen_toy(args, config: RunConfig, logger) -> int:
    dataset = gen_toy(config.toy, args.out)
    logger.info(
        f"Wrote {len(dataset.triplets)} triplets and "
        f"{len(dataset.manifest.images)} images to {args.out}"
    )
    return EXIT_OK


def cmd_roam(args, config: RunConfig, logger) -> int:
    if args.action == "sample":
        triplets = datasets.load_triplets(args.triplets)
        sheet = roaming.sample_review_sheet(triplets, args.count, args.seed)
        roaming.write_review_sheet(sheet, args.out)
        logger.info(f"Wrote {len(sheet)} review rows to {args.out}")
        return EXIT_OK

    if args.mock:
        client = MockCompletionClient(logger)
    else:
        load_doppler_secrets(logger)
        client = HttpCompletionClient(logger)
    handler = roaming.RoamingHandler(logger, client, config.roam, threads=config.threads)
    result = handler.roam(roaming.load_vqa_pairs(args.pairs))
    roaming.write_roam_outputs(result, args.out, args.audit)
    return EXIT_OK


def cmd_stats(args, config: RunConfig, logger) -> int:
    triplets = datasets.load_triplets(args.triplets)
    manifest = datasets.load_corpus(args.manifest).manifest if args.manifest else None
    report = roaming.dataset_stats(triplets, manifest)
    _emit(report.model_dump(mode="json"), args.out)
    return EXIT_OK


def cmd_train(args, config: RunConfig, logger) -> int:
    triplets, corpus, _ = _load(args)
    if args.split is None:
        triplets, _ = _select(triplets, corpus, Split.TRAIN)
    tokenizer = Tokenizer.from_texts(
        [t.query_text for t in triplets], max_text_len=config.model.max_text_len
    )
    model = CaseModel.create(config.model, tokenizer, config.init)
    trainer = Trainer(logger, model, corpus.images, config.train)
    reports = trainer.fit(triplets)
    save_checkpoint(args.out, model)
    if args.report:
        write_jsonl(args.report, (r.model_dump(mode="json") for r in reports))
    logger.info(f"Saved checkpoint to {args.out}")
    return EXIT_OK


def cmd_embed(args, config: RunConfig, logger) -> int:
    model = load_checkpoint(args.checkpoint)
    corpus = datasets.load_corpus(args.manifest)
    ids = corpus.ids(Split(args.split) if args.split else None)
    matrix = embed_targets(model, corpus.images, ids, config.threads)
    retrieval.save_index(retrieval.index_from_matrix(ids, matrix), args.out)
    logger.info(f"Wrote {len(ids)} corpus embeddings to {args.out}")
    if args.triplets and args.queries_out:
        triplets, _ = _select(datasets.load_triplets(args.triplets), corpus, args.split)
        mode = QueryMode(args.mode)
        queries = embed_queries(model, triplets, corpus.images, mode, config.threads)
        qids = [t.qid for t in triplets]
        retrieval.save_index(retrieval.index_from_matrix(qids, queries), args.queries_out)
        logger.info(
            f"Wrote {len(triplets)} {args.mode} query embeddings to {args.queries_out}"
        )
    return EXIT_OK


def cmd_retrieve(args, config: RunConfig, logger) -> int:
    model = load_checkpoint(args.checkpoint)
    corpus = datasets.load_corpus(args.manifest)
    index = retrieval.load_index(args.index)
    image = corpus.images[args.image]
    query = model.forward_query(image, args.text, QueryMode(args.mode))
    result = retrieval.top_k(index, query.data, args.k)
    print(json.dumps(result.model_dump(mode="json"), indent=2))
    return EXIT_OK


def cmd_eval(args, config: RunConfig, logger) -> int:
    triplets, corpus, _ = _load(args)
    index = retrieval.load_index(args.index)
    if args.queries:
        queries = _cemb_rows(args.queries, [t.qid for t in triplets])
    elif args.checkpoint and corpus is not None:
        model = load_checkpoint(args.checkpoint)
        mode = QueryMode(args.mode)
        queries = embed_queries(model, triplets, corpus.images, mode, config.threads)
    else:
        raise UsageError("eval needs --queries, or --checkpoint with --manifest")
    report = metrics.evaluate(
        queries,
        triplets,
        index,
        config.eval.k_set,
        groups=args.groups,
        threads=config.threads,
    )
    if args.csv:
        metrics.write_report_csv(report, args.csv)
    _emit(report.model_dump(mode="json"), args.out)
    return EXIT_OK


def _curves(args, config: RunConfig, logger) -> int:
    triplets, corpus, ids = _load(args)
    targets = [t.target_image for t in triplets]
    k_grid = config.redundancy.k_grid
    threads = config.threads
    curves = []
    queries, index = redundancy.text_bow_filter(triplets, corpus.manifest, ids)
    curves.append(
        redundancy.unimodal_curve(
            queries, index, targets, k_grid, Modality.TEXT_ONLY, threads
        )
    )
    queries, index = redundancy.image_pixel_filter(triplets, corpus.images, ids)
    curves.append(
        redundancy.unimodal_curve(
            queries, index, targets, k_grid, Modality.IMAGE_ONLY, threads
        )
    )
    if args.queries and args.index:
        queries = _cemb_rows(args.queries, [t.qid for t in triplets])
        curves.append(
            redundancy.unimodal_curve(
                queries,
                retrieval.load_index(args.index),
                targets,
                k_grid,
                Modality.REFERENCE,
                threads,
            )
        )
    if args.csv:
        redundancy.write_curves_csv(curves, args.csv)
    _emit({"curves": [c.model_dump(mode="json") for c in curves]}, args.out)
    return EXIT_OK


def _sweep(args, config: RunConfig, logger) -> int:
    triplets, corpus, ids = _load(args)
    qids = [t.qid for t in triplets]
    images, threads = corpus.images, config.threads

    if args.filter_queries and args.filter_index:
        filter_queries = _cemb_rows(args.filter_queries, qids)
        filter_index = retrieval.load_index(args.filter_index)
    elif args.filter == "image_pixel":
        filters = redundancy.image_pixel_filter(triplets, images, ids)
        filter_queries, filter_index = filters
    else:
        filters = redundancy.text_bow_filter(triplets, corpus.manifest, ids)
        filter_queries, filter_index = filters
    filter_ranks = redundancy.rank_map(filter_queries, triplets, filter_index, threads)

    if args.method_queries and args.method_index:
        method_queries = _cemb_rows(args.method_queries, qids)
        method_index = retrieval.load_index(args.method_index)
    elif args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        mode = QueryMode(args.mode)
        method_queries = embed_queries(model, triplets, images, mode, threads)
        method_index = retrieval.index_from_matrix(
            ids, embed_targets(model, images, ids, threads)
        )
    else:
        raise UsageError(
            "sweep needs --checkpoint or --method-queries with --method-index"
        )
    method_ranks = redundancy.rank_map(method_queries, triplets, method_index, threads)

    table = redundancy.redundancy_sweep(
        method_ranks, filter_ranks, config.redundancy.n_grid, config.redundancy.k_set
    )
    if table.degenerate:
        logger.warning("Every purified subset is empty; the sweep is degenerate")
    if args.csv:
        redundancy.write_sweep_csv(table, args.csv)
    _emit(table.model_dump(mode="json"), args.out)
    return EXIT_OK


def cmd_redundancy(args, config: RunConfig, logger) -> int:
    if args.action == "curve":
        return _curves(args, config, logger)
    return _sweep(args, config, logger)


def cmd_explain(args, config: RunConfig, logger) -> int:
    triplets, corpus, _ = _load(args)
    by_qid = {t.qid: t for t in triplets}
    if args.qid not in by_qid:
        raise IngestionError(f"no triplet with qid {args.qid}")
    triplet = by_qid[args.qid]
    model = load_checkpoint(args.checkpoint)
    image = corpus.images[triplet.query_image]
    target = model.encode_target(corpus.images[triplet.target_image]).data
    heatmap = explain.mask_heatmap(
        model, image, triplet.query_text, target,
        config.explain.window, config.explain.stride, config.threads,
    )
    tokens = explain.token_saliency(model, image, triplet.query_text, target)
    if args.overlay:
        explain.write_overlay(args.overlay, image, heatmap)
    _emit(
        {
            "qid": triplet.qid,
            "heatmap": heatmap.model_dump(mode="json"),
            "tokens": [t.model_dump(mode="json") for t in tokens],
        },
        args.out,
    )
    return EXIT_OK


def cmd_convert(args, config: RunConfig, logger) -> int:
    try:
        records = json.loads(Path(args.input).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IngestionError(f"invalid JSON: {e.msg}", line=e.lineno) from e
    if args.action == "cirr":
        triplets = datasets.convert_cirr(records)
    else:
        triplets = datasets.convert_fashioniq(records, args.category)
    write_jsonl(args.out, (t.to_json_dict() for t in triplets))
    logger.info(f"Converted {len(triplets)} {args.action} records to {args.out}")
    return EXIT_OK


COMMANDS: dict[str, Callable] = {
    "gen-toy": cmd_gen_toy,
    "roam": cmd_roam,
    "stats": cmd_stats,
    "train": cmd_train,
    "embed": cmd_embed,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "redundancy": cmd_redundancy,
    "explain": cmd_explain,
    "convert": cmd_convert,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    logger = make_logger(getattr(args, "log_level", None))
    try:
        config = load_config(args.config, overrides_from(args))
        logger.log.setLevel(config.log_level)
        resolved = config.model_dump(mode="json")
        logger.info(
            f"caselab {args.command}: seed={_seed(args, config)} "
            f"config={make_hash(resolved)} versions={versions()}"
        )
        logger.info(f"Resolved config: {json.dumps(resolved, sort_keys=True)}")
        return COMMANDS[args.command](args, config, logger)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        logger.error(str(e))
        return EXIT_USAGE
    except CaseLabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DOMAIN
    except OSError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DOMAIN


def main():
    sys.exit(run())
