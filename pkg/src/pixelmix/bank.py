"""Binary checkpoint format for a per-pixel mixture bank.

Layout (little-endian)::

    header   magic b"PXMB" | version u32 | width u32 | height u32 | d u32 | t u64
    records  width * height pixel records, row-major, each holding for
             slot 0, 1, 2: w, mu[d], Sigma[d*d], N, M[d], Z[d*d]   (float64)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .em import MixtureBank
from .errors import DataError, UsageError
from .mixture import N_SLOTS

MAGIC = b"PXMB"
VERSION = 1
HEADER = struct.Struct("<4sIIIIQ")


def slot_record_size(d: int) -> int:
    """float64 values per slot."""
    return 2 + 2 * d + 2 * d * d


def record_bytes(d: int) -> int:
    return 8 * N_SLOTS * slot_record_size(d)


def file_size(width: int, height: int, d: int) -> int:
    return HEADER.size + width * height * record_bytes(d)


def _columns(d):
    return [("weights", 1), ("means", d), ("covs", d * d),
            ("counts", 1), ("sums", d), ("outer", d * d)]


def encode_bank(bank: MixtureBank) -> bytes:
    p, d = bank.size, bank.d
    parts = [getattr(bank, name).reshape(p, N_SLOTS, width) for name, width in _columns(d)]
    records = np.concatenate(parts, axis=-1).astype("<f8")
    header = HEADER.pack(MAGIC, VERSION, bank.width, bank.height, d, bank.t)
    return header + records.tobytes()


def decode_bank(data: bytes, expect_d=None, path=None) -> MixtureBank:
    if len(data) < HEADER.size:
        raise DataError(f"truncated header ({len(data)} bytes)", offset=len(data), path=path)
    magic, version, width, height, d, t = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}", offset=0, path=path)
    if version != VERSION:
        raise DataError(f"unsupported bank version {version}", offset=4, path=path)
    if d not in (1, 3) or width < 1 or height < 1:
        raise DataError(f"bad dimensions {width}x{height}x{d}", offset=8, path=path)
    if expect_d is not None and d != int(expect_d):
        raise DataError(f"bank has d={d}, run expects d={int(expect_d)}", offset=16, path=path)
    want = file_size(width, height, d)
    if len(data) != want:
        raise DataError(f"expected {want} bytes, found {len(data)}",
                        offset=min(len(data), want), path=path)
    p = width * height
    rec = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    rec = rec.reshape(p, N_SLOTS, slot_record_size(d)).astype(np.float64)
    arrays, col = {}, 0
    for name, w in _columns(d):
        block = rec[..., col:col + w]
        col += w
        if name in ("weights", "counts"):
            arrays[name] = block[..., 0].copy()
        elif name in ("means", "sums"):
            arrays[name] = block.copy()
        else:
            arrays[name] = block.reshape(p, N_SLOTS, d, d).copy()
    return MixtureBank(width, height, t=int(t), **arrays)


def save_model_bank(bank: MixtureBank, path):
    Path(path).write_bytes(encode_bank(bank))


def load_model_bank(path, expect_d=None) -> MixtureBank:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no checkpoint at {path}")
    return decode_bank(path.read_bytes(), expect_d=expect_d, path=path)
