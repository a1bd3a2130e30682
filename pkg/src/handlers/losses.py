"""Batch losses over a query x target cosine matrix.

Row i of `sim` is a query, column j a target; `positives[i]` is the column of
the query's single positive. Every other column is an in-batch negative.
"""

from typing import Sequence

import numpy as np

from src.errors import ContractError, NumericInputError
from src.helpers import ops
from src.helpers.tensor import Tensor
from src.schemas.common import LossVariant
from src.schemas.training import LossConfig


def _positive_mask(sim: Tensor, positives: Sequence[int]) -> np.ndarray:
    rows, cols = sim.shape
    if len(positives) != rows:
        raise ContractError(f"{len(positives)} positives for {rows} query rows")
    mask = np.zeros((rows, cols), dtype=sim.data.dtype)
    for i, p in enumerate(positives):
        if not 0 <= p < cols:
            raise ContractError(f"positive column {p} out of range for row {i}")
        mask[i, p] = 1.0
    return mask


def _check_sim(sim: Tensor):
    if sim.data.ndim != 2:
        raise ContractError(f"similarity matrix must be 2-D, got {sim.shape}")
    if np.isnan(sim.data).any():
        raise NumericInputError("similarity matrix contains NaN")


def smooth_ranks(sim: Tensor, positives: Sequence[int], tau1: float) -> Tensor:
    """r(i) = 1 + sum_{j != p(i)} sigmoid((sim[i,j] - sim[i,p(i)]) / tau1), as [B x 1]."""
    mask = _positive_mask(sim, positives)
    cols = sim.shape[1]
    positive_sim = ops.sum_rows(ops.mul(sim, Tensor(mask)))
    diff = ops.sub(sim, ops.broadcast_cols(positive_sim, cols))
    soft = ops.sigmoid(ops.scale(diff, 1.0 / tau1))
    negatives_only = ops.mul(soft, Tensor(1.0 - mask))
    return ops.add_scalar(ops.sum_rows(negatives_only), 1.0)


def recall_surrogate_loss(
    sim: Tensor, positives: Sequence[int], cfg: LossConfig
) -> Tensor:
    """1 - mean over rows and K of sigmoid((k + 1/2 - r(i)) / tau2).

    The half-step puts the sigmoid's midpoint between ranks k and k+1, so as
    tau1, tau2 -> 0 each term tends to the exact indicator [rank <= k].
    """
    _check_sim(sim)
    if sim.shape[0] < 2 or sim.shape[1] < 2:
        raise ContractError("surrogate loss needs a batch of at least 2 (no negatives)")
    ranks = smooth_ranks(sim, positives, cfg.tau1)
    recalls = [
        ops.sigmoid(
            ops.scale(ops.add_scalar(ops.scale(ranks, -1.0), k + 0.5), 1.0 / cfg.tau2)
        )
        for k in cfg.k_set
    ]
    table = recalls[0] if len(recalls) == 1 else ops.concat_cols(recalls)
    return ops.add_scalar(ops.scale(ops.mean_all(table), -1.0), 1.0)


def info_nce_loss(sim: Tensor, positives: Sequence[int], temperature: float) -> Tensor:
    """Cross-entropy of row-softmax(sim / temperature) against the positives."""
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    _check_sim(sim)
    mask = _positive_mask(sim, positives)
    log_probs = ops.log_softmax_rows(ops.scale(sim, 1.0 / temperature))
    picked = ops.sum_all(ops.mul(log_probs, Tensor(mask)))
    return ops.scale(picked, -1.0 / sim.shape[0])


def batch_loss(sim: Tensor, positives: Sequence[int], cfg: LossConfig) -> Tensor:
    if cfg.variant == LossVariant.CONTRASTIVE:
        return info_nce_loss(sim, positives, cfg.temperature)
    return recall_surrogate_loss(sim, positives, cfg)
