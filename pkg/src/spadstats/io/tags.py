"""Binary time-tag files.

Layout (little-endian): 20-byte header ``b"TTG1"``, u16 version, u64 tick
resolution in femtoseconds, 6 zero bytes; then one u64 absolute tick per
event, strictly increasing.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..data import TimeTagStream, first_non_increasing
from ..errors import DataError, TagFormatError

MAGIC = b"TTG1"
VERSION = 1
HEADER = struct.Struct("<4sHQ6s")
HEADER_SIZE = HEADER.size
_U64 = np.dtype("<u8")


def _parse_header(raw: bytes) -> int:
    if len(raw) < HEADER_SIZE:
        raise TagFormatError(f"file shorter than the {HEADER_SIZE}-byte header", offset=len(raw))
    magic, version, res_fs, reserved = HEADER.unpack(raw[:HEADER_SIZE])
    if magic != MAGIC:
        raise TagFormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise TagFormatError(f"unsupported version {version}", offset=4)
    if res_fs == 0:
        raise TagFormatError("tick resolution must be > 0", offset=6)
    if reserved != bytes(6):
        raise TagFormatError("reserved header bytes are not zero", offset=14)
    return res_fs


def _check_payload(ticks: np.ndarray, base: int = 0):
    bad = first_non_increasing(ticks)
    if bad is not None:
        offset = HEADER_SIZE + 8 * (base + bad)
        raise TagFormatError(f"tick at byte offset {offset} does not exceed its predecessor", offset=offset)


def read_tags(path) -> TimeTagStream:
    with open(path, "rb") as fh:
        res_fs = _parse_header(fh.read(HEADER_SIZE))
        payload = fh.read()
    if len(payload) % 8:
        raise TagFormatError(f"payload of {len(payload)} bytes is not a multiple of 8",
                             offset=HEADER_SIZE + len(payload) - len(payload) % 8)
    ticks = np.frombuffer(payload, dtype=_U64).astype(np.uint64)
    _check_payload(ticks)
    return TimeTagStream(ticks, res_fs)


def iter_tag_chunks(path, chunk_events: int = 1 << 20):
    """Yield ``(tick_resolution_fs, ticks)`` chunks; monotonicity is checked across chunks."""
    size = os.path.getsize(path)
    if (size - HEADER_SIZE) % 8 and size >= HEADER_SIZE:
        raise TagFormatError("payload length is not a multiple of 8", offset=size - (size - HEADER_SIZE) % 8)
    with open(path, "rb") as fh:
        res_fs = _parse_header(fh.read(HEADER_SIZE))
        seen = 0
        last = None
        while True:
            buf = fh.read(8 * chunk_events)
            if not buf:
                return
            ticks = np.frombuffer(buf, dtype=_U64).astype(np.uint64)
            if last is not None and ticks[0] <= last:
                offset = HEADER_SIZE + 8 * seen
                raise TagFormatError(f"tick at byte offset {offset} does not exceed its predecessor",
                                     offset=offset)
            _check_payload(ticks, seen)
            seen += len(ticks)
            last = ticks[-1]
            yield res_fs, ticks


def write_tags(stream: TimeTagStream, path):
    bad = first_non_increasing(stream.ticks)
    if bad is not None:
        raise DataError(f"tick {bad} does not exceed its predecessor", index=bad)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, stream.tick_resolution_fs, bytes(6)))
        fh.write(np.ascontiguousarray(stream.ticks, dtype=_U64).tobytes())
