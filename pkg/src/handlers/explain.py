"""Post-hoc explanations for a single query.

Visual: slide a black window over the query image and record how much the
query/target cosine drops. Textual: norm of the cosine's gradient with respect
to each input token embedding.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List

import numpy as np

from src.adapters.storage.images import save_image
from src.errors import ContractError
from src.handlers.case_model import CaseModel
from src.helpers import ops
from src.helpers.tensor import Tape, Tensor, backward
from src.schemas.common import ImageFormat, QueryMode
from src.schemas.explain import Heatmap, TokenScore

MASK_VALUE = 0.0
OVERLAY_ALPHA = 0.5
# low -> high importance
RAMP = np.array(
    [
        [0, 0, 128],
        [0, 128, 255],
        [0, 255, 0],
        [255, 255, 0],
        [255, 0, 0],
    ],
    dtype=np.float64,
)


def _unit(target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float32).reshape(-1)
    norm = np.linalg.norm(target)
    return target / norm if norm > 0 else np.zeros_like(target)


def grid_size(size: int, window: int, stride: int) -> int:
    if stride < 1:
        raise ContractError(f"stride must be at least 1, got {stride}")
    if window < 1 or window > size:
        raise ContractError(f"window {window} does not fit an image of size {size}")
    return (size - window) // stride + 1


def mask_heatmap(
    model: CaseModel,
    image: np.ndarray,
    text: str,
    target_embedding: np.ndarray,
    window: int = 8,
    stride: int = 4,
    threads: int = 1,
) -> Heatmap:
    size = model.config.image_size
    cells = grid_size(size, window, stride)
    target = _unit(target_embedding)

    def similarity(img: np.ndarray) -> float:
        query = model.forward_query(img, text, QueryMode.STANDARD)
        return float(np.dot(query.data, target))

    def masked(position: tuple[int, int]) -> float:
        row, col = position
        img = np.array(image, dtype=np.float32, copy=True)
        top, left = row * stride, col * stride
        img[top : top + window, left : left + window] = MASK_VALUE
        return similarity(img)

    base = similarity(np.asarray(image, dtype=np.float32))
    positions = [(r, c) for r in range(cells) for c in range(cells)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(masked, positions))
    else:
        values = [masked(p) for p in positions]
    grid = (base - np.array(values, dtype=np.float64)).reshape(cells, cells)
    return Heatmap(window=window, stride=stride, base_similarity=base, grid=grid.tolist())


def token_saliency(
    model: CaseModel, image: np.ndarray, text: str, target_embedding: np.ndarray
) -> List[TokenScore]:
    if not text.strip():
        raise ContractError("token saliency needs a non-empty text")
    target = Tensor(_unit(target_embedding))
    states: dict = {}
    model.params.zero_grad()
    try:
        with Tape() as tape:
            query = model.forward_query(image, text, QueryMode.STANDARD, states)
            cosine = ops.dot(query, target)
        backward(tape, cosine)
        grad = states["token_embeddings"].grad
    finally:
        model.params.zero_grad()

    ids = model.query_ids(text, QueryMode.STANDARD)
    if grad is None:
        grad = np.zeros((len(ids), model.config.d), dtype=np.float32)
    scores = np.linalg.norm(grad.astype(np.float64), axis=1)
    special = model.tokenizer.special_ids
    tokens = model.tokenizer.convert_ids_to_tokens(ids)
    return [
        TokenScore(token=tok, token_id=i, score=float(s), special=i in special)
        for tok, i, s in zip(tokens, ids, scores)
    ]


def heat_per_pixel(heatmap: Heatmap, size: int) -> np.ndarray:
    """Mean heat of the windows covering each pixel; uncovered pixels are 0."""
    total = np.zeros((size, size), dtype=np.float64)
    hits = np.zeros((size, size), dtype=np.float64)
    w, s = heatmap.window, heatmap.stride
    for r, row in enumerate(heatmap.grid):
        for c, value in enumerate(row):
            total[r * s : r * s + w, c * s : c * s + w] += value
            hits[r * s : r * s + w, c * s : c * s + w] += 1
    return np.divide(total, hits, out=np.zeros_like(total), where=hits > 0)


def overlay(image: np.ndarray, heatmap: Heatmap) -> np.ndarray:
    """uint8 RGB: the image blended with the ramp colour of the clipped, scaled heat."""
    heat = np.clip(heat_per_pixel(heatmap, image.shape[0]), 0.0, None)
    peak = heat.max()
    level = heat / peak if peak > 0 else heat
    stops = np.linspace(0.0, 1.0, len(RAMP))
    colour = np.stack([np.interp(level, stops, RAMP[:, ch]) for ch in range(3)], axis=-1)
    base = np.asarray(image, dtype=np.float64)[..., :3] * 255.0
    blended = (1.0 - OVERLAY_ALPHA) * base + OVERLAY_ALPHA * colour
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def write_overlay(path: str | Path, image: np.ndarray, heatmap: Heatmap) -> None:
    save_image(path, overlay(image, heatmap), ImageFormat.PPM)
