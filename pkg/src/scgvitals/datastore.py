"""Framed binary chunk/bundle format for sensor and vitals data.

Wire layout of a single chunk (all integers little endian)::

    u8   type_tag      1=ACC_FRAME 2=VITALS 3=PREDICTION 4=EVENT
    u64  timestamp_us
    u24  payload_len   (< 2**24)
    ...  payload
    u32  crc32         IEEE CRC-32 of every preceding byte of the chunk

so an encoded chunk is exactly ``16 + len(payload)`` bytes.  A bundle
file (``.icx``) is::

    4s   magic  b"ICXB"
    u16  version (=1)
    u32  chunk_count
    ...  encoded chunks, back to back
    u32  crc32 of everything preceding

Decoding is strict and total: any byte string either decodes or raises a
typed :class:`~scgvitals.errors.FormatError` carrying the byte offset.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import BinaryIO, Iterable

import numpy as np

from .errors import (
    CrcMismatchError,
    SizeError,
    TruncatedError,
    UnknownTagError,
    ValidationError,
)

BUNDLE_MAGIC = b"ICXB"
BUNDLE_VERSION = 1
MAX_PAYLOAD = (1 << 24) - 1
CHUNK_OVERHEAD = 16  # tag + timestamp + length + crc


class ChunkType(IntEnum):
    ACC_FRAME = 1
    VITALS = 2
    PREDICTION = 3
    EVENT = 4


@dataclass(frozen=True)
class Chunk:
    type_tag: ChunkType
    timestamp_us: int
    payload: bytes = b""

    def __post_init__(self):
        if self.type_tag not in ChunkType._value2member_map_:
            raise ValidationError("type_tag", f"unknown tag {self.type_tag}")
        if not 0 <= self.timestamp_us < 1 << 64:
            raise ValidationError("timestamp_us", "must fit in u64")
        if len(self.payload) > MAX_PAYLOAD:
            raise SizeError(f"payload of {len(self.payload)} bytes exceeds u24 cap")


@dataclass
class Bundle:
    chunks: list[Chunk] = field(default_factory=list)

    def __len__(self):
        return len(self.chunks)


def encode_chunk(chunk: Chunk) -> bytes:
    """Serialize one chunk to its 16 + payload_len byte frame."""
    n = len(chunk.payload)
    if n > MAX_PAYLOAD:
        raise SizeError(f"payload of {n} bytes exceeds u24 cap")
    head = struct.pack("<BQ", int(chunk.type_tag), chunk.timestamp_us)
    head += n.to_bytes(3, "little")
    body = head + chunk.payload
    return body + struct.pack("<I", zlib.crc32(body))


def decode_chunk(data: bytes, offset: int = 0) -> tuple[Chunk, int]:
    """Decode the chunk starting at ``offset``.

    Returns ``(chunk, next_offset)``.  Raises TruncatedError,
    UnknownTagError, or CrcMismatchError; never anything untyped.
    """
    if len(data) - offset < CHUNK_OVERHEAD:
        raise TruncatedError("chunk header incomplete", offset)
    tag, ts = struct.unpack_from("<BQ", data, offset)
    if tag not in ChunkType._value2member_map_:
        raise UnknownTagError(f"unknown chunk tag {tag}", offset)
    n = int.from_bytes(data[offset + 9 : offset + 12], "little")
    end = offset + CHUNK_OVERHEAD + n
    if len(data) < end:
        raise TruncatedError(f"chunk promises {n} payload bytes", offset)
    payload = data[offset + 12 : offset + 12 + n]
    (stored,) = struct.unpack_from("<I", data, offset + 12 + n)
    actual = zlib.crc32(data[offset : offset + 12 + n])
    if stored != actual:
        raise CrcMismatchError(
            f"crc 0x{stored:08x} != computed 0x{actual:08x}", offset + 12 + n
        )
    return Chunk(ChunkType(tag), ts, payload), end


def decode_stream(data: bytes) -> list[Chunk]:
    """Decode back-to-back chunks until the buffer is exhausted."""
    chunks = []
    pos = 0
    while pos < len(data):
        chunk, pos = decode_chunk(data, pos)
        chunks.append(chunk)
    return chunks


def write_bundle(fp: BinaryIO, chunks: Iterable[Chunk]) -> int:
    """Write a bundle; returns the number of chunks written."""
    encoded = [encode_chunk(c) for c in chunks]
    head = BUNDLE_MAGIC + struct.pack("<HI", BUNDLE_VERSION, len(encoded))
    body = head + b"".join(encoded)
    fp.write(body)
    fp.write(struct.pack("<I", zlib.crc32(body)))
    return len(encoded)


def read_bundle(data: bytes) -> Bundle:
    """Parse a full bundle image, validating header, count, and total CRC."""
    if len(data) < 10 + 4:
        raise TruncatedError("bundle header incomplete", 0)
    if data[:4] != BUNDLE_MAGIC:
        raise UnknownTagError(f"bad bundle magic {data[:4]!r}", 0)
    version, count = struct.unpack_from("<HI", data, 4)
    if version != BUNDLE_VERSION:
        raise UnknownTagError(f"unsupported bundle version {version}", 4)
    (stored,) = struct.unpack_from("<I", data, len(data) - 4)
    actual = zlib.crc32(data[: len(data) - 4])
    if stored != actual:
        raise CrcMismatchError(
            f"bundle crc 0x{stored:08x} != computed 0x{actual:08x}", len(data) - 4
        )
    chunks = []
    pos = 10
    for _ in range(count):
        chunk, pos = decode_chunk(data, pos)
        chunks.append(chunk)
    if pos != len(data) - 4:
        raise TruncatedError("trailing bytes after declared chunks", pos)
    return Bundle(chunks)


def read_bundle_file(path) -> Bundle:
    with open(path, "rb") as fp:
        return read_bundle(fp.read())


def write_bundle_file(path, chunks: Iterable[Chunk]) -> int:
    with open(path, "wb") as fp:
        return write_bundle(fp, chunks)


# ---------------------------------------------------------------------------
# Payload schemas.  These are the package's own conventions for what lives
# inside each chunk type; the framing above does not interpret payloads.

ACC1_SITE = 1  # xiphoid
ACC2_SITE = 2  # sternal, 12 cm toward the suprasternal notch


def pack_acc_frame(site: int, fs: float, ax, ay, az) -> bytes:
    """ACC_FRAME payload: u8 site | f32 fs | u32 n | f32 ax[n] ay[n] az[n]."""
    ax = np.asarray(ax, dtype="<f4")
    ay = np.asarray(ay, dtype="<f4")
    az = np.asarray(az, dtype="<f4")
    if not (len(ax) == len(ay) == len(az)):
        raise ValidationError("axes", "ax/ay/az must have equal length")
    head = struct.pack("<BfI", site, fs, len(ax))
    return head + ax.tobytes() + ay.tobytes() + az.tobytes()


def chunk_acc_streams(acc1, acc2, block_s: float = 1.0) -> list[Chunk]:
    """Chop a dual-site recording into per-block ACC_FRAME chunks.

    Both sites of each block share one timestamp so readers can re-pair
    them; a short trailing block is kept.
    """
    if block_s <= 0:
        raise ValidationError("block_s", "must be > 0")
    sites = [(s, st) for s, st in ((ACC1_SITE, acc1), (ACC2_SITE, acc2)) if st is not None]
    if not sites:
        raise ValidationError("streams", "need at least one site")
    per_block = max(1, int(round(block_s * sites[0][1].fs)))
    n = max(len(st) for _, st in sites)
    chunks = []
    for start in range(0, n, per_block):
        ts_us = round(start / sites[0][1].fs * 1e6)
        for site, st in sites:
            if start >= len(st):
                continue
            sl = slice(start, min(start + per_block, len(st)))
            payload = pack_acc_frame(site, st.fs, st.ax[sl], st.ay[sl], st.az[sl])
            chunks.append(Chunk(ChunkType.ACC_FRAME, ts_us, payload))
    return chunks


def unpack_acc_frame(payload: bytes) -> tuple[int, float, np.ndarray, np.ndarray, np.ndarray]:
    if len(payload) < 9:
        raise TruncatedError("acc frame payload too short", 0)
    site, fs, n = struct.unpack_from("<BfI", payload, 0)
    need = 9 + 12 * n
    if len(payload) != need:
        raise TruncatedError(f"acc frame payload expects {need} bytes", 9)
    arr = np.frombuffer(payload, dtype="<f4", count=3 * n, offset=9)
    return site, fs, arr[:n].copy(), arr[n : 2 * n].copy(), arr[2 * n :].copy()


def pack_vitals(values: dict[str, float]) -> bytes:
    """VITALS payload: u8 n | n x (u8 name_len | name utf8 | f32 value)."""
    if len(values) > 255:
        raise SizeError("too many vitals channels")
    out = [struct.pack("<B", len(values))]
    for name, value in values.items():
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise SizeError(f"channel name too long: {name!r}")
        out.append(struct.pack("<B", len(raw)) + raw + struct.pack("<f", value))
    return b"".join(out)


def unpack_vitals(payload: bytes) -> dict[str, float]:
    if len(payload) < 1:
        raise TruncatedError("vitals payload empty", 0)
    n = payload[0]
    pos = 1
    values: dict[str, float] = {}
    for _ in range(n):
        if pos >= len(payload):
            raise TruncatedError("vitals payload ends mid-entry", pos)
        ln = payload[pos]
        pos += 1
        if pos + ln + 4 > len(payload):
            raise TruncatedError("vitals payload ends mid-entry", pos)
        name = payload[pos : pos + ln].decode("utf-8", errors="replace")
        pos += ln
        (value,) = struct.unpack_from("<f", payload, pos)
        pos += 4
        values[name] = value
    if pos != len(payload):
        raise TruncatedError("trailing bytes after vitals entries", pos)
    return values


def pack_prediction(probability: float, label: int) -> bytes:
    return struct.pack("<fB", probability, 1 if label else 0)


def unpack_prediction(payload: bytes) -> tuple[float, int]:
    if len(payload) != 5:
        raise TruncatedError("prediction payload must be 5 bytes", 0)
    p, label = struct.unpack("<fB", payload)
    return p, label


def pack_event(text: str) -> bytes:
    return text.encode("utf-8")


def unpack_event(payload: bytes) -> str:
    return payload.decode("utf-8", errors="replace")
