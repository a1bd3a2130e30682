import time
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from src.errors import ContractError, IngestionError, TrainingDivergenceError
from src.handlers.case_model import CaseModel
from src.handlers.losses import batch_loss
from src.handlers.optimizer import OptimizerState, adamw_step, lr_at_epoch
from src.helpers import ops
from src.helpers.prng import SplitMix64
from src.helpers.tensor import Tape, Tensor, backward
from src.schemas.common import Provenance, QueryMode
from src.schemas.training import EpochReport, TrainConfig
from src.schemas.triplet import Triplet

FROZEN_VIT_PREFIX = "vit."


@dataclass
class Batch:
    queries: Tensor  # [B x d_e]
    targets: Tensor  # [B x d_e]
    positives: List[int]
    provenance: List[Provenance]

    def __len__(self):
        return len(self.positives)


def _image(images: Mapping, image_id: str, triplet: Triplet) -> np.ndarray:
    try:
        return images[image_id]
    except KeyError as e:
        raise IngestionError(
            f"triplet {triplet.qid} references missing image {image_id}", field="image"
        ) from e


def build_batch(
    triplets: Sequence[Triplet],
    model: CaseModel,
    images: Mapping,
    rq_enabled: bool = True,
    mode: QueryMode = QueryMode.STANDARD,
) -> Batch:
    """Forward samples for every triplet, then (optionally) their reverse samples.

    Query row i is paired with target row i. Visual tokens are computed once per
    image id within the batch. `mode` masks the query side the way
    `CaseModel.forward_query` does; targets are always full images.
    """
    visual: dict[str | None, Tensor] = {}

    def tokens(image_id: str | None, triplet: Triplet) -> Tensor:
        # None stands for the blank image of text-only queries
        if image_id not in visual:
            if image_id is None:
                image = model.blank_image()
            else:
                image = _image(images, image_id, triplet)
            visual[image_id] = model.encode_image(image)
        return visual[image_id]

    targets: dict[str, Tensor] = {}

    def target(image_id: str, triplet: Triplet) -> Tensor:
        if image_id not in targets:
            targets[image_id] = model.target_from_visual(tokens(image_id, triplet))
        return targets[image_id]

    queries, target_rows, provenance = [], [], []
    for t in triplets:
        ids = model.query_ids(t.query_text, mode)
        image_id = None if mode == QueryMode.TEXT_ONLY else t.query_image
        queries.append(model.query_from_visual(ids, tokens(image_id, t)))
        target_rows.append(target(t.target_image, t))
        provenance.append(Provenance.FORWARD)
    if rq_enabled:
        for t in triplets:
            ids = model.query_ids(t.query_text, QueryMode.REVERSE)
            queries.append(model.query_from_visual(ids, tokens(t.target_image, t)))
            target_rows.append(target(t.query_image, t))
            provenance.append(Provenance.REVERSE)

    return Batch(
        queries=ops.stack_rows(queries),
        targets=ops.stack_rows(target_rows),
        positives=list(range(len(queries))),
        provenance=provenance,
    )


class Trainer:
    def __init__(self, logger, model: CaseModel, images: Mapping, config: TrainConfig):
        self.logger = logger
        self.model = model
        self.images = images
        self.config = config
        self.rng = SplitMix64(config.seed)
        self.state = OptimizerState.zeros(model.params)

    def trainable_names(self) -> List[str]:
        names = self.model.params.names()
        if self.config.freeze_vit:
            return [n for n in names if not n.startswith(FROZEN_VIT_PREFIX)]
        return names

    def step(self, triplets: Sequence[Triplet], lr: float) -> float:
        params = self.model.params
        params.zero_grad()
        with Tape() as tape:
            batch = build_batch(
                triplets,
                self.model,
                self.images,
                self.config.reverse_samples,
                self.config.query_mode,
            )
            sim = ops.matmul(batch.queries, ops.transpose(batch.targets))
            loss = batch_loss(sim, batch.positives, self.config.loss)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergenceError(f"loss became {value}")
        backward(tape, loss)
        grads = {name: t.grad for name, t in params.items() if t.grad is not None}
        adamw_step(
            self.state,
            params,
            grads,
            lr,
            self.config.optimizer.weight_decay,
            self.config.optimizer,
            self.trainable_names(),
        )
        return value

    def train_epoch(self, triplets: Sequence[Triplet], epoch: int) -> EpochReport:
        if not triplets:
            raise ContractError("cannot train on an empty dataset")
        started = time.perf_counter()
        lr = lr_at_epoch(self.config.schedule, epoch)
        order = self.rng.permutation(len(triplets))
        size = self.config.batch_size
        rows_per_triplet = 2 if self.config.reverse_samples else 1

        losses, samples = [], 0
        for start in range(0, len(order), size):
            chunk = [triplets[i] for i in order[start : start + size]]
            if len(chunk) * rows_per_triplet < 2:
                self.logger.debug("Dropping a batch with a single sample")
                continue
            losses.append(self.step(chunk, lr))
            samples += len(chunk) * rows_per_triplet
        if not losses:
            raise ContractError("no batch with at least two samples; raise batch_size")

        report = EpochReport(
            epoch=epoch,
            mean_loss=float(np.mean(losses)),
            lr=lr,
            wall_ms=(time.perf_counter() - started) * 1000.0,
            seed=self.config.seed,
            samples=samples,
        )
        self.logger.info(
            f"epoch {epoch}: loss {report.mean_loss:.4f}, lr {lr:.2e}, "
            f"{samples} samples in {report.wall_ms:.0f} ms"
        )
        return report

    def fit(
        self,
        triplets: Sequence[Triplet],
        on_epoch: Callable[[EpochReport], None] | None = None,
    ) -> List[EpochReport]:
        self.logger.info(
            f"Training {self.model.params.count()} parameters "
            f"on {len(triplets)} triplets "
            f"for {self.config.epochs} epochs (mode={self.config.query_mode}, "
            f"rq={self.config.reverse_samples}, loss={self.config.loss.variant}, "
            f"freeze_vit={self.config.freeze_vit})"
        )
        reports = []
        for epoch in range(self.config.epochs):
            report = self.train_epoch(triplets, epoch)
            reports.append(report)
            if on_epoch is not None:
                on_epoch(report)
        return reports


def _parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def embed_targets(
    model: CaseModel, images: Mapping, ids: Sequence[str], threads: int = 1
) -> np.ndarray:
    """Target embeddings [len(ids) x d_e], rows in `ids` order."""
    rows = _parallel_map(lambda i: model.encode_target(images[i]).data, ids, threads)
    if not rows:
        return np.zeros((0, model.config.d_e), np.float32)
    return np.stack(rows).astype(np.float32)


def embed_queries(
    model: CaseModel,
    triplets: Sequence[Triplet],
    images: Mapping,
    mode: QueryMode = QueryMode.STANDARD,
    threads: int = 1,
) -> np.ndarray:
    """Query embeddings [len(triplets) x d_e].

    Reverse mode starts from the target image.
    """

    def one(t: Triplet) -> np.ndarray:
        image_id = t.target_image if mode == QueryMode.REVERSE else t.query_image
        return model.forward_query(_image(images, image_id, t), t.query_text, mode).data

    rows = _parallel_map(one, triplets, threads)
    if not rows:
        return np.zeros((0, model.config.d_e), np.float32)
    return np.stack(rows).astype(np.float32)
