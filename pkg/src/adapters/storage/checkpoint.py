"""Model checkpoints.

Layout: magic "CASE", version u32, config record (u32 length + UTF-8 JSON with
model config, init metadata and vocabulary), u32 block count, then per block:
u16 name length + UTF-8 name, u32 ndim, ndim x u32 dims, float32 LE payload.
"""

import json
import struct
from pathlib import Path

import numpy as np

from src.adapters.storage.binary import BinaryReader, f32_bytes
from src.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from src.errors import FormatError
from src.handlers.case_model import CaseModel, Parameters
from src.helpers.common import dumps_stable
from src.helpers.tensor import Tensor
from src.helpers.tokenizer import Tokenizer
from src.schemas.model_config import InitConfig, ModelConfig


def encode_checkpoint(model: CaseModel) -> bytes:
    record = dumps_stable(
        {
            "model": model.config.model_dump(mode="json"),
            "init": model.params.init.model_dump(mode="json"),
            "vocab": model.tokenizer.vocab,
        }
    ).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(record)),
        record,
        struct.pack("<I", len(model.params)),
    ]
    for name, tensor in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<I", tensor.data.ndim))
        parts.append(struct.pack(f"<{tensor.data.ndim}I", *tensor.shape))
        parts.append(f32_bytes(tensor.data))
    return b"".join(parts)


def decode_checkpoint(buffer: bytes) -> CaseModel:
    reader = BinaryReader(buffer)
    reader.magic(CHECKPOINT_MAGIC)
    start = reader.offset
    version = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", start)
    start = reader.offset
    try:
        record = json.loads(reader.utf8(reader.u32("config length"), "config record"))
        config = ModelConfig(**record["model"])
        init = InitConfig(**record["init"])
        tokenizer = Tokenizer(record["vocab"], max_text_len=config.max_text_len)
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"invalid config record: {e}", start) from e

    tensors, offsets = {}, {}
    for _ in range(reader.u32("block count")):
        block_start = reader.offset
        name = reader.utf8(reader.u16("name length"), "block name")
        ndim = reader.u32("ndim")
        dims = tuple(reader.u32("dim") for _ in range(ndim))
        data = reader.f32_array(int(np.prod(dims)), f"block {name}").reshape(dims)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
        offsets[name] = block_start
    reader.expect_end()

    expected = Parameters.initialize(config, init)
    if list(tensors) != expected.names():
        missing = sorted(set(expected.names()) - set(tensors))
        raise FormatError(
            f"parameter blocks do not match config; missing {missing}", start
        )
    for name, tensor in tensors.items():
        shape = expected.tensors[name].shape
        if tensor.shape != shape:
            raise FormatError(
                f"block {name} has shape {tensor.shape}, config needs {shape}",
                offsets[name],
            )
    return CaseModel(config, tokenizer, Parameters(tensors, init))


def save_checkpoint(path: str | Path, model: CaseModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model))


def load_checkpoint(path: str | Path) -> CaseModel:
    return decode_checkpoint(Path(path).read_bytes())
