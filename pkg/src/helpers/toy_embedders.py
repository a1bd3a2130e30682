"""Off-the-shelf stand-ins for the filtering retrievers of the redundancy analysis.

Both produce l2-normalized float32 vectors that can be written as CEMB files
and fed to the same code path as externally computed embeddings.
"""

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from src.helpers.tokenizer import split_words

# constant feature so an all-black image still has a direction
IMAGE_BIAS = 1e-3


class BowTextEmbedder:
    """Term-frequency vector over a fixed vocabulary, plus one unknown-word bucket."""

    def __init__(self, vocabulary: Sequence[str]):
        self.vocabulary = list(vocabulary)
        self.index = {w: i for i, w in enumerate(self.vocabulary)}

    @classmethod
    def fit(cls, texts: Iterable[str]) -> "BowTextEmbedder":
        return cls(sorted({w for text in texts for w in split_words(text)}))

    @property
    def dim(self) -> int:
        return len(self.vocabulary) + 1

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        counts = Counter(split_words(text))
        for word, count in counts.items():
            vector[self.index.get(word, self.dim - 1)] += count
        if not counts:
            vector[-1] = 1.0
        return (vector / np.linalg.norm(vector)).astype(np.float32)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), np.float32)
        return np.stack([self.embed(t) for t in texts])


class MeanPixelEmbedder:
    """Per-channel means over a pool x pool grid of image cells."""

    def __init__(self, pool: int = 4):
        self.pool = pool

    def embed(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        h, w, c = image.shape
        ph, pw = h // self.pool, w // self.pool
        cropped = image[: ph * self.pool, : pw * self.pool]
        pooled = cropped.reshape(self.pool, ph, self.pool, pw, c).mean(axis=(1, 3))
        vector = np.append(pooled.reshape(-1), IMAGE_BIAS)
        return (vector / np.linalg.norm(vector)).astype(np.float32)

    def embed_many(self, images: Sequence[np.ndarray]) -> np.ndarray:
        return np.stack([self.embed(i) for i in images])
