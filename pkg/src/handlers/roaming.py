"""VQA to CoIR conversion.

A complementary pair (I, Q, A) / (I_c, Q, A_c) becomes the triplet
(I, S_c, I_c), where S_c is a language-model rephrasing of (Q, A_c), and with
symmetry also (I_c, S, I) from (Q, A).
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from pydantic import ValidationError

from src.adapters.completion.base import BaseCompletionClient
from src.constants import COMPLETION_ATTEMPTS, COMPLETION_BACKOFF
from src.errors import (
    CompletionClientError,
    CompletionTransportError,
    ContractError,
    EmptyCompletionError,
    IngestionError,
)
from src.helpers.common import write_csv, write_jsonl
from src.helpers.prng import SplitMix64
from src.helpers.tokenizer import split_words
from src.schemas.common import FilterRule, Split
from src.schemas.roaming import (
    ComplementaryPair,
    FilterVerdict,
    PromptExample,
    PromptTemplate,
    RoamConfig,
    StatsReport,
    VqaRecord,
)
from src.schemas.triplet import CorpusManifest, Triplet

DEFAULT_TEMPLATE = PromptTemplate(
    examples=[
        PromptExample(
            question="Are there any humans visible in the photo?",
            answer="yes",
            rephrased="Add some people to the photo",
        ),
        PromptExample(
            question="Is there a square on the doors?",
            answer="yes",
            rephrased="Find a door with a square on top of it",
        ),
        PromptExample(
            question="What color is the man's tie?",
            answer="blue",
            rephrased="Change the color of the tie of the man to be blue",
        ),
    ]
)

REVIEW_COLUMNS = ["qid", "query_image", "query_text", "target_image", "well_phrased"]


def build_prompt(template: PromptTemplate, question: str, answer: str) -> str:
    if not question.strip() or not answer.strip():
        raise ContractError("question and answer must not be empty")
    lines = [template.header]
    lines += [f'"{e.question} {e.answer}" = "{e.rephrased}"' for e in template.examples]
    lines.append(f'"{question} {answer}" =')
    return "\n".join(lines)


def clean_completion(raw: str) -> str:
    """Trim whitespace, then one layer of matching quotes, then whitespace again."""
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    return text.strip()


def filter_text(text: str, config: RoamConfig) -> FilterVerdict:
    reasons = []
    if len(text) < config.min_length:
        reasons.append(FilterRule.TOO_SHORT)
    if len(text) > config.max_length:
        reasons.append(FilterRule.TOO_LONG)
    if any(s in text for s in config.forbidden):
        reasons.append(FilterRule.FORBIDDEN_SUBSTRING)
    return FilterVerdict(keep=not reasons, reasons=reasons)


def load_vqa_pairs(path: str | Path) -> List[ComplementaryPair]:
    """VQA JSON: a list of records with image_id, question, answer,
    complement_image_id and complement_answer.
    """
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IngestionError(f"cannot read VQA pairs {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"invalid JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(records, list):
        raise IngestionError("VQA file must hold a JSON list of records")
    pairs = []
    for position, record in enumerate(records):
        try:
            pairs.append(VqaRecord(**record).to_pair(f"p{position:06d}"))
        except ValidationError as e:
            error = e.errors()[0]
            location = ".".join(str(p) for p in error.get("loc", ())) or None
            raise IngestionError(
                error.get("msg", str(e)), line=position + 1, field=location
            ) from e
        except TypeError as e:
            raise IngestionError("record must be a JSON object", line=position + 1) from e
    return pairs


@dataclass
class _Job:
    pair: ComplementaryPair
    reverse: bool

    @property
    def qid(self) -> str:
        return f"{self.pair.id}-{'r' if self.reverse else 'f'}"

    @property
    def source(self):
        return self.pair.complement if self.reverse else self.pair.original

    @property
    def target(self):
        return self.pair.original if self.reverse else self.pair.complement


@dataclass
class RoamResult:
    triplets: List[Triplet] = field(default_factory=list)
    # (qid or pair id, reason)
    dropped: List[tuple[str, str]] = field(default_factory=list)
    audit: List[dict] = field(default_factory=list)


class RoamingHandler:
    def __init__(
        self,
        logger,
        client: BaseCompletionClient,
        config: RoamConfig,
        template: PromptTemplate = DEFAULT_TEMPLATE,
        sleep: Callable[[float], None] = time.sleep,
        threads: int = 1,
    ):
        self.logger = logger
        self.client = client
        self.config = config
        self.template = template
        self.sleep = sleep
        self.threads = threads

    def build_prompt(self, question: str, answer: str) -> str:
        return build_prompt(self.template, question, answer)

    def rephrase(self, prompt: str, audit: Optional[List[dict]] = None) -> str:
        """Completion for `prompt`, retried on transport failures with fixed backoff."""
        for attempt in range(1, COMPLETION_ATTEMPTS + 1):
            try:
                raw = self.client.complete(
                    prompt, self.config.max_tokens, self.config.temperature
                )
                break
            except CompletionTransportError as e:
                if attempt == COMPLETION_ATTEMPTS:
                    raise CompletionClientError(
                        f"completion failed after {attempt} attempts: {e}"
                    ) from e
                self.logger.warning(f"Completion attempt {attempt} failed: {e}")
                self.sleep(COMPLETION_BACKOFF[attempt - 1])

        text = clean_completion(raw)
        if audit is not None:
            audit.append(
                {"prompt": prompt, "raw": raw, "text": text, "attempts": attempt}
            )
        if not text:
            raise EmptyCompletionError("completion is empty after trimming")
        return text

    def _run(self, job: _Job) -> tuple[Optional[str], List[dict], Optional[str]]:
        # (text, audit records, error message)
        audit: List[dict] = []
        prompt = self.build_prompt(job.pair.original.question, job.target.answer)
        try:
            return self.rephrase(prompt, audit), audit, None
        except CompletionClientError as e:
            return None, audit, str(e)

    def roam(self, pairs: Sequence[ComplementaryPair]) -> RoamResult:
        result = RoamResult()
        jobs: List[_Job] = []
        for pair in pairs:
            if pair.original.image_id == pair.complement.image_id:
                self.logger.warning(
                    f"Dropping pair {pair.id}: query and target share the image"
                )
                result.dropped.append((pair.id, FilterRule.SAME_IMAGE))
                continue
            jobs.append(_Job(pair, reverse=False))
            if self.config.symmetry:
                jobs.append(_Job(pair, reverse=True))

        if self.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                outcomes = list(pool.map(self._run, jobs))
        else:
            outcomes = [self._run(job) for job in jobs]

        rng = SplitMix64(self.config.seed)
        for job, (text, audit, error) in zip(jobs, outcomes):
            for record in audit:
                result.audit.append({"qid": job.qid, **record})
            if error is not None:
                self.logger.error(f"Pair {job.pair.id} ({job.qid}): {error}")
                result.dropped.append((job.qid, error))
                continue
            verdict = filter_text(text, self.config)
            if not verdict.keep:
                reasons = ",".join(verdict.reasons)
                self.logger.info(f"Dropping {job.qid}: {reasons} ({text!r})")
                result.dropped.append((job.qid, reasons))
                continue
            triplet = Triplet(
                qid=job.qid,
                query_image=job.source.image_id,
                query_text=text,
                target_image=job.target.image_id,
            )
            result.triplets.append(self._mix_caption(triplet, job.target.caption, rng))

        self.logger.info(
            f"Roamed {len(pairs)} pairs into {len(result.triplets)} triplets "
            f"({len(result.dropped)} dropped)"
        )
        return result

    def _mix_caption(
        self, triplet: Triplet, caption: Optional[str], rng: SplitMix64
    ) -> Triplet:
        """Swap in the target caption on a seeded share of triplets."""
        draw = rng.uniform()
        if self.config.caption_fraction <= 0 or draw >= self.config.caption_fraction:
            return triplet
        if not caption or not filter_text(caption, self.config).keep:
            return triplet
        return triplet.model_copy(update={"query_text": caption, "caption": caption})


def write_roam_outputs(
    result: RoamResult, out_path: str | Path, audit_path: str | Path | None
):
    write_jsonl(out_path, (t.to_json_dict() for t in result.triplets))
    if audit_path is not None:
        write_jsonl(audit_path, result.audit)


def dataset_stats(
    triplets: Sequence[Triplet], manifest: CorpusManifest | None = None
) -> StatsReport:
    """Triplet count, corpus sizes, unique words and mean text length."""
    report = StatsReport(triplets=len(triplets))
    if manifest is not None:
        report.corpus_train = len(manifest.ids(Split.TRAIN))
        report.corpus_val = len(manifest.ids(Split.VAL))
    if not triplets:
        return report
    words = [split_words(t.query_text) for t in triplets]
    report.unique_tokens = len({w for ws in words for w in ws})
    report.avg_text_chars = sum(len(t.query_text) for t in triplets) / len(triplets)
    report.avg_text_tokens = sum(len(ws) for ws in words) / len(triplets)
    return report


def sample_review_sheet(
    triplets: Sequence[Triplet], count: int, seed: int = 0
) -> List[Triplet]:
    """A seeded sample for manual quality review, in original order."""
    if count >= len(triplets):
        return list(triplets)
    chosen = sorted(SplitMix64(seed).permutation(len(triplets))[:count])
    return [triplets[i] for i in chosen]


def write_review_sheet(triplets: Sequence[Triplet], path: str | Path) -> None:
    rows = [[t.qid, t.query_image, t.query_text, t.target_image, ""] for t in triplets]
    write_csv(path, REVIEW_COLUMNS, rows)
