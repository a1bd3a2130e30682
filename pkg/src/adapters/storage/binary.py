import struct

import numpy as np

from src.errors import FormatError


class BinaryReader:
    """Little-endian cursor over a byte buffer; failures carry the byte offset."""

    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.buffer):
            raise FormatError(f"truncated {what}", self.offset)
        chunk = self.buffer[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def magic(self, expected: bytes):
        start = self.offset
        found = self.take(len(expected), "magic")
        if found != expected:
            raise FormatError(f"bad magic {found!r}, expected {expected!r}", start)

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)

    def utf8(self, size: int, what: str) -> str:
        start = self.offset
        raw = self.take(size, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"invalid UTF-8 in {what}", start) from e

    def expect_end(self):
        if self.offset != len(self.buffer):
            raise FormatError("trailing bytes", self.offset)


def f32_bytes(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()
