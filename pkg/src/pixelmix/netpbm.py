"""Binary PGM (P5) / PPM (P6) frames and label masks, maxval 255 only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .segment import SemanticLabel

MASK_CODES = {SemanticLabel.ROAD: 0, SemanticLabel.SHADOW: 128, SemanticLabel.VEHICLE: 255}
_CODE_LUT = np.array([MASK_CODES[l] for l in SemanticLabel], dtype=np.uint8)

_WHITESPACE = b" \t\n\r\v\f"


def _header_token(data, pos):
    """Next header token and the offset just past it, skipping comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DataError("unexpected end of header", offset=start)
    return data[start:pos], start, pos


def _header_int(data, pos, what):
    tok, start, pos = _header_token(data, pos)
    if not tok.isdigit():
        raise DataError(f"bad {what} {tok[:16]!r}", offset=start)
    return int(tok), start, pos


def decode_frame(data: bytes, path=None) -> np.ndarray:
    """Parse P5/P6 bytes into a float64 (H, W, d) array."""
    try:
        if data[:2] == b"P5":
            d = 1
        elif data[:2] == b"P6":
            d = 3
        else:
            raise DataError(f"unsupported magic {bytes(data[:2])!r}", offset=0)
        pos = 2
        if len(data) > 2 and data[2:3] not in _WHITESPACE and data[2:3] != b"#":
            raise DataError("missing whitespace after magic", offset=2)
        width, start, pos = _header_int(data, pos, "width")
        if width < 1:
            raise DataError("width must be positive", offset=start)
        height, start, pos = _header_int(data, pos, "height")
        if height < 1:
            raise DataError("height must be positive", offset=start)
        maxval, start, pos = _header_int(data, pos, "maxval")
        if maxval != 255:
            raise DataError(f"unsupported maxval {maxval} (only 255)", offset=start)
        if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
            raise DataError("missing whitespace before raster", offset=pos)
        pos += 1
        need = width * height * d
        raster = data[pos:pos + need]
        if len(raster) < need:
            raise DataError(f"truncated raster: expected {need} bytes, found {len(raster)}",
                            offset=pos + len(raster))
    except DataError as exc:
        if path is not None and exc.path is None:
            raise DataError(exc.reason, exc.offset, path) from None
        raise
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, d)
    return pixels.astype(np.float64)


def _to_bytes(frame):
    f = np.asarray(frame)
    if f.ndim == 2:
        f = f[..., None]
    if f.ndim != 3 or f.shape[-1] not in (1, 3):
        raise UsageError(f"frame must be (H, W) or (H, W, 1|3), got {f.shape}")
    if f.dtype != np.uint8:
        f = np.clip(np.rint(np.asarray(f, dtype=np.float64)), 0, 255).astype(np.uint8)
    return f


def encode_frame(frame) -> bytes:
    """P5 for single-channel frames, P6 for RGB. Values are rounded and clipped."""
    f = _to_bytes(frame)
    h, w, d = f.shape
    magic = b"P5" if d == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + f.tobytes()


def read_frame(path) -> np.ndarray:
    path = Path(path)
    return decode_frame(path.read_bytes(), path=path)


def write_frame(frame, path):
    Path(path).write_bytes(encode_frame(frame))


def encode_mask(mask) -> bytes:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise UsageError(f"mask must be 2-D, got {m.shape}")
    if m.size and (m.min() < 0 or m.max() > 2):
        raise UsageError("mask contains values that are not semantic labels")
    return encode_frame(_CODE_LUT[m.astype(np.intp)])


def decode_mask(data: bytes, path=None) -> np.ndarray:
    f = decode_frame(data, path=path)
    if f.shape[-1] != 1:
        raise DataError("mask files must be P5", offset=0, path=path)
    codes = f[..., 0].astype(np.uint8)
    out = np.full(codes.shape, 255, dtype=np.uint8)
    for label, code in MASK_CODES.items():
        out[codes == code] = label
    if np.any(out == 255):
        bad = int(np.flatnonzero(out.ravel() == 255)[0])
        raise DataError(f"pixel {bad} holds {codes.ravel()[bad]}, not a mask code",
                        offset=len(data) - codes.size + bad, path=path)
    return out


def write_mask(mask, path):
    Path(path).write_bytes(encode_mask(mask))


def read_mask(path) -> np.ndarray:
    path = Path(path)
    return decode_mask(path.read_bytes(), path=path)
