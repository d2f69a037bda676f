"""Numbered frame sequences on disk.

A sequence directory holds ``frame_000001.pgm`` (or ``.ppm``) onwards and,
optionally, ground-truth masks ``truth_000001.pgm`` with the same numbering.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .netpbm import read_frame, read_mask, write_frame, write_mask

FRAME_RE = re.compile(r"^frame_(\d{6})\.(pgm|ppm)$")


def frame_name(t: int, d: int) -> str:
    return f"frame_{t:06d}.{'pgm' if d == 1 else 'ppm'}"


def numbered(prefix: str, t: int, ext: str = "pgm") -> str:
    return f"{prefix}_{t:06d}.{ext}"


class SequenceReader:
    """Frames t = 1..T in order; shape is fixed by the first frame."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise UsageError(f"no sequence directory at {self.directory}")
        found = {}
        for p in self.directory.iterdir():
            m = FRAME_RE.match(p.name)
            if m:
                t = int(m.group(1))
                if t in found:
                    raise DataError(f"frame {t} present as both .pgm and .ppm", path=p)
                found[t] = p
        self.paths = [found[t] for t in sorted(found)]
        for expect, t in enumerate(sorted(found), 1):
            if t != expect:
                raise DataError(f"frame numbering has a gap: expected {expect}, found {t}",
                                path=found[t])
        self.shape = None

    def __len__(self):
        return len(self.paths)

    def read(self, t: int) -> np.ndarray:
        """Frame ``t`` (1-based), checked against the sequence shape."""
        if not 1 <= t <= len(self.paths):
            raise UsageError(f"frame {t} outside 1..{len(self.paths)}")
        frame = read_frame(self.paths[t - 1])
        if self.shape is None:
            self.shape = frame.shape
        elif frame.shape != self.shape:
            raise DataError(f"frame {t} has shape {frame.shape}, sequence has {self.shape}",
                            path=self.paths[t - 1])
        return frame

    def __iter__(self):
        for t in range(1, len(self.paths) + 1):
            yield t, self.read(t)

    def truth(self, t: int):
        p = self.directory / numbered("truth", t)
        return read_mask(p) if p.is_file() else None

    def has_truth(self) -> bool:
        return len(self.paths) > 0 and (self.directory / numbered("truth", 1)).is_file()


class SequenceWriter:
    def __init__(self, directory, prefix="frame"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix

    def write(self, t: int, frame):
        f = np.asarray(frame)
        d = 1 if f.ndim == 2 else f.shape[-1]
        write_frame(f, self.directory / numbered(self.prefix, t, "pgm" if d == 1 else "ppm"))

    def write_mask(self, t: int, mask):
        write_mask(mask, self.directory / numbered(self.prefix, t))


def write_sequence(directory, frames, masks=None):
    """Write a stack of frames (and optional truth masks) as a sequence directory."""
    frames_out = SequenceWriter(directory, "frame")
    truth_out = SequenceWriter(directory, "truth")
    for t, frame in enumerate(frames, 1):
        frames_out.write(t, frame)
        if masks is not None:
            truth_out.write_mask(t, masks[t - 1])
