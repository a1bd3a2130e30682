"""CEMB: id-addressed float32 embedding matrices.

Layout: magic "CEMB", version u32, dim u32, count u64, count*dim float32
row-major, then per id a u16 byte length and UTF-8 bytes. All little-endian.
This is also the import format for embeddings produced outside the repo.
"""

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from src.adapters.storage.binary import BinaryReader, f32_bytes
from src.constants import CEMB_MAGIC, CEMB_VERSION
from src.errors import FormatError


def encode_cemb(ids: Sequence[str], matrix: np.ndarray) -> bytes:
    count, dim = matrix.shape
    if len(ids) != count:
        raise ValueError(f"{len(ids)} ids for {count} rows")
    parts = [CEMB_MAGIC, struct.pack("<IIQ", CEMB_VERSION, dim, count), f32_bytes(matrix)]
    for id_ in ids:
        raw = id_.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"id too long: {id_[:32]}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def decode_cemb(buffer: bytes) -> tuple[list[str], np.ndarray]:
    reader = BinaryReader(buffer)
    reader.magic(CEMB_MAGIC)
    start = reader.offset
    version = reader.u32("version")
    if version != CEMB_VERSION:
        raise FormatError(f"unsupported version {version}", start)
    dim = reader.u32("dim")
    count = reader.u64("count")
    matrix = reader.f32_array(count * dim, "matrix").reshape(count, dim)
    ids = [reader.utf8(reader.u16("id length"), "id") for _ in range(count)]
    reader.expect_end()
    return ids, matrix


def write_cemb(path: str | Path, ids: Sequence[str], matrix: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_cemb(ids, matrix))


def read_cemb(path: str | Path) -> tuple[list[str], np.ndarray]:
    return decode_cemb(Path(path).read_bytes())
