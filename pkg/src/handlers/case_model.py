"""Toy-scale CASE: ViT-lite image encoder + shift encoder with cross-attention.

One ViT serves the query branch and target encoding; the visual [CLS] goes
through the image projection, the shift-encoder [CLS] through the text
projection. All blocks are pre-layer-norm.
"""

import math
from typing import Iterator, Sequence

import numpy as np

from src.constants import LAYER_NORM_EPS
from src.errors import ContractError, DimensionError, NumericInputError
from src.helpers import ops
from src.helpers.prng import SplitMix64
from src.helpers.tensor import Tensor
from src.helpers.tokenizer import Tokenizer
from src.schemas.common import QueryMode
from src.schemas.model_config import InitConfig, ModelConfig


def cross_attention(q_t: Tensor, k_v: Tensor, v_v: Tensor, n_heads: int = 1) -> Tensor:
    """S = softmax(Q_t K_v^T / sqrt(d)) V_v, computed per head over column groups.

    With n_heads=1 this is the closed formula with d the full width; otherwise
    each head of width d/n_heads is scaled by its own width.
    """
    for t in (q_t, k_v, v_v):
        if t.data.ndim != 2:
            raise DimensionError("cross_attention expects 2-D inputs", t.shape)
    d = q_t.shape[1]
    if k_v.shape[1] != d or v_v.shape[1] != d:
        raise DimensionError(
            "cross_attention width mismatch", q_t.shape, k_v.shape, v_v.shape
        )
    if k_v.shape[0] != v_v.shape[0]:
        raise DimensionError("keys and values differ in length", k_v.shape, v_v.shape)
    if d % n_heads:
        raise DimensionError(f"width {d} not divisible into {n_heads} heads", q_t.shape)

    width = d // n_heads
    heads = []
    for h in range(n_heads):
        lo, hi = h * width, (h + 1) * width
        if n_heads == 1:
            qh, kh, vh = q_t, k_v, v_v
        else:
            qh = ops.slice_cols(q_t, lo, hi)
            kh = ops.slice_cols(k_v, lo, hi)
            vh = ops.slice_cols(v_v, lo, hi)
        scores = ops.scale(ops.matmul(qh, ops.transpose(kh)), 1.0 / math.sqrt(width))
        heads.append(ops.matmul(ops.softmax_rows(scores), vh))
    return heads[0] if n_heads == 1 else ops.concat_cols(heads)


class Parameters:
    """Named learnable tensors of the model, in a fixed creation order."""

    def __init__(self, tensors: dict[str, Tensor], init: InitConfig):
        self.tensors = tensors
        self.init = init

    @classmethod
    def initialize(cls, config: ModelConfig, init: InitConfig) -> "Parameters":
        """Scaled uniform init U(-a, a) with a = scale/sqrt(fan_in).

        Embedding tables use a = 0.1*scale.
        """
        rng = SplitMix64(init.seed)
        tensors: dict[str, Tensor] = {}

        def uniform(name: str, shape: tuple[int, ...], bound: float):
            values = rng.uniform_array(int(np.prod(shape))) * 2.0 - 1.0
            data = (values * bound).astype(np.float32).reshape(shape)
            tensors[name] = Tensor(data, requires_grad=True, name=name)

        def constant(name: str, shape: tuple[int, ...], value: float):
            tensors[name] = Tensor(
                np.full(shape, value, dtype=np.float32), requires_grad=True, name=name
            )

        def linear(prefix: str, fan_in: int, fan_out: int):
            uniform(f"{prefix}.w", (fan_in, fan_out), init.scale / math.sqrt(fan_in))
            constant(f"{prefix}.b", (fan_out,), 0.0)

        def norm(prefix: str):
            constant(f"{prefix}.g", (config.d,), 1.0)
            constant(f"{prefix}.b", (config.d,), 0.0)

        def attention(prefix: str):
            for part in ("q", "k", "v", "o"):
                linear(f"{prefix}.{part}", config.d, config.d)

        def ffn(prefix: str):
            hidden = config.d * config.ffn_mult
            linear(f"{prefix}.fc1", config.d, hidden)
            linear(f"{prefix}.fc2", hidden, config.d)

        emb = 0.1 * init.scale
        uniform("text.tok_embed", (config.vocab_size, config.d), emb)
        uniform("text.pos", (config.max_text_len, config.d), emb)
        linear("vit.patch", config.patch_dim, config.d)
        uniform("vit.cls", (1, config.d), emb)
        uniform("vit.pos", (config.n_v, config.d), emb)
        for i in range(config.vit_layers):
            norm(f"vit.layer{i}.ln1")
            attention(f"vit.layer{i}.attn")
            norm(f"vit.layer{i}.ln2")
            ffn(f"vit.layer{i}.ffn")
        norm("vit.ln_f")
        for i in range(config.shift_layers):
            norm(f"shift.layer{i}.ln1")
            attention(f"shift.layer{i}.self_attn")
            norm(f"shift.layer{i}.ln_x")
            attention(f"shift.layer{i}.cross_attn")
            norm(f"shift.layer{i}.ln2")
            ffn(f"shift.layer{i}.ffn")
        norm("shift.ln_f")
        uniform("proj.image.w", (config.d, config.d_e), init.scale / math.sqrt(config.d))
        uniform("proj.text.w", (config.d, config.d_e), init.scale / math.sqrt(config.d))
        return cls(tensors, init)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.tensors.values())

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def astype(self, dtype) -> "Parameters":
        tensors = {n: t.astype(dtype) for n, t in self.tensors.items()}
        return Parameters(tensors, self.init)

    def copy(self) -> "Parameters":
        return self.astype(np.float32)

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self.tensors.values())


class CaseModel:
    def __init__(self, config: ModelConfig, tokenizer: Tokenizer, params: Parameters):
        if len(tokenizer) != config.vocab_size:
            raise ContractError(
                f"tokenizer has {len(tokenizer)} entries, "
                f"config expects {config.vocab_size}"
            )
        if tokenizer.max_text_len != config.max_text_len:
            raise ContractError("tokenizer and config disagree on max_text_len")
        self.config = config
        self.tokenizer = tokenizer
        self.params = params

    @classmethod
    def create(
        cls, config: ModelConfig, tokenizer: Tokenizer, init: InitConfig | None = None
    ) -> "CaseModel":
        config = config.model_copy(update={"vocab_size": len(tokenizer)})
        tokenizer = Tokenizer(tokenizer.vocab, max_text_len=config.max_text_len)
        return cls(config, tokenizer, Parameters.initialize(config, init or InitConfig()))

    # building blocks

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    def _linear(self, x: Tensor, prefix: str, bias: bool = True) -> Tensor:
        y = ops.matmul(x, self._p(f"{prefix}.w"))
        return ops.add_bias(y, self._p(f"{prefix}.b")) if bias else y

    def _norm(self, x: Tensor, prefix: str) -> Tensor:
        return ops.layer_norm(
            x, self._p(f"{prefix}.g"), self._p(f"{prefix}.b"), LAYER_NORM_EPS
        )

    def _attention(self, prefix: str, x_q: Tensor, x_kv: Tensor) -> Tensor:
        q = self._linear(x_q, f"{prefix}.q")
        k = self._linear(x_kv, f"{prefix}.k")
        v = self._linear(x_kv, f"{prefix}.v")
        mixed = cross_attention(q, k, v, n_heads=self.config.n_heads)
        return self._linear(mixed, f"{prefix}.o")

    def _ffn(self, x: Tensor, prefix: str) -> Tensor:
        hidden = ops.gelu(self._linear(x, f"{prefix}.fc1"))
        return self._linear(hidden, f"{prefix}.fc2")

    # image encoder

    def patchify(self, image: np.ndarray) -> np.ndarray:
        cfg = self.config
        image = np.asarray(image)
        if image.shape != cfg.image_shape:
            raise DimensionError("image shape mismatch", image.shape, cfg.image_shape)
        if not np.isfinite(image).all() or image.min() < 0.0 or image.max() > 1.0:
            raise NumericInputError("pixel values must be finite and within [0, 1]")
        grid = cfg.image_size // cfg.patch_size
        p = cfg.patch_size
        patches = image.reshape(grid, p, grid, p, cfg.channels).transpose(0, 2, 1, 3, 4)
        return np.ascontiguousarray(patches.reshape(grid * grid, cfg.patch_dim))

    def encode_image(self, image: np.ndarray, states: dict | None = None) -> Tensor:
        """Visual token sequence [n_v x d]; the visual [CLS] is row 0."""
        patches = Tensor(self.patchify(image).astype(np.float32))
        embedded = self._linear(patches, "vit.patch")
        x = ops.add(ops.concat_rows([self._p("vit.cls"), embedded]), self._p("vit.pos"))
        if states is not None:
            states["visual_input"] = x
        for i in range(self.config.vit_layers):
            prefix = f"vit.layer{i}"
            normed = self._norm(x, f"{prefix}.ln1")
            x = ops.add(x, self._attention(f"{prefix}.attn", normed, normed))
            x = ops.add(x, self._ffn(self._norm(x, f"{prefix}.ln2"), f"{prefix}.ffn"))
        return self._norm(x, "vit.ln_f")

    # shift encoder

    def query_ids(self, text: str, mode: QueryMode) -> list[int]:
        match mode:
            case QueryMode.STANDARD | QueryMode.TEXT_ONLY:
                return self.tokenizer.tokenize(text)
            case QueryMode.REVERSE:
                return self.tokenizer.tokenize(text, reverse=True)
            case QueryMode.IMAGE_ONLY:
                return [self.tokenizer.cls_id, self.tokenizer.sep_id]
        raise ContractError(f"unknown query mode {mode!r}")

    def query_from_visual(
        self, ids: Sequence[int], visual: Tensor, states: dict | None = None
    ) -> Tensor:
        tokens = ops.embedding_lookup(self._p("text.tok_embed"), ids)
        if states is not None:
            states["token_embeddings"] = tokens
        positions = ops.embedding_lookup(self._p("text.pos"), list(range(len(ids))))
        h = ops.add(tokens, positions)
        for i in range(self.config.shift_layers):
            prefix = f"shift.layer{i}"
            normed = self._norm(h, f"{prefix}.ln1")
            h = ops.add(h, self._attention(f"{prefix}.self_attn", normed, normed))
            normed = self._norm(h, f"{prefix}.ln_x")
            h = ops.add(h, self._attention(f"{prefix}.cross_attn", normed, visual))
            h = ops.add(h, self._ffn(self._norm(h, f"{prefix}.ln2"), f"{prefix}.ffn"))
        h = self._norm(h, "shift.ln_f")
        cls_state = ops.slice_rows(h, 0, 1)
        projected = ops.matmul(cls_state, self._p("proj.text.w"))
        return ops.reshape(ops.l2_normalize(projected), (self.config.d_e,))

    def target_from_visual(self, visual: Tensor) -> Tensor:
        projected = ops.matmul(ops.slice_rows(visual, 0, 1), self._p("proj.image.w"))
        return ops.reshape(ops.l2_normalize(projected), (self.config.d_e,))

    def blank_image(self) -> np.ndarray:
        return np.zeros(self.config.image_shape, dtype=np.float32)

    def query_image(self, image: np.ndarray, mode: QueryMode) -> np.ndarray:
        if mode == QueryMode.TEXT_ONLY:
            return self.blank_image()
        return image

    def forward_query(
        self,
        image: np.ndarray,
        text: str,
        mode: QueryMode = QueryMode.STANDARD,
        states: dict | None = None,
    ) -> Tensor:
        """Unit-norm query embedding [d_e].

        In reverse mode `image` is the target image and `text` the original
        transition text.
        """
        try:
            mode = QueryMode(mode)
        except ValueError as e:
            raise ContractError(f"unknown query mode {mode!r}") from e
        visual = self.encode_image(self.query_image(image, mode))
        return self.query_from_visual(self.query_ids(text, mode), visual, states)

    def encode_target(self, image: np.ndarray) -> Tensor:
        return self.target_from_visual(self.encode_image(image))
