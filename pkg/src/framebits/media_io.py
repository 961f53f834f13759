"""Raw planar YUV 4:2:0 reader/writer.

Frames are stored back to back, each as a full Y plane followed by the
quarter-size U and V planes, row-major, no padding. Only 8-bit samples are
supported; raw YUV has no header, so geometry always comes from the caller.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import IndexOutOfRange, InvalidGeometry, TruncatedFile

SUPPORTED_BIT_DEPTHS = (8,)


@dataclass(frozen=True)
class VideoGeometry:
    width: int
    height: int
    bit_depth: int = 8
    frame_rate: float = 30.0
    frame_count: int = 0

    def __post_init__(self):
        validate_geometry(self.width, self.height, self.bit_depth)

    @property
    def luma_size(self) -> int:
        return self.width * self.height

    @property
    def chroma_shape(self) -> tuple[int, int]:
        return self.height // 2, self.width // 2

    @property
    def frame_size(self) -> int:
        return self.luma_size * 3 // 2


@dataclass(frozen=True)
class FramePlanes:
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    index: int = 0

    def __iter__(self):
        return iter((self.y, self.u, self.v))


def validate_geometry(width: int, height: int, bit_depth: int = 8) -> None:
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise InvalidGeometry(
            f"bit depth {bit_depth} is not supported; only 8-bit 4:2:0 input "
            "is accepted (convert 10-bit sources before analysis)"
        )
    if width <= 0 or height <= 0:
        raise InvalidGeometry(f"geometry must be positive, got {width}x{height}")
    if width % 2 or height % 2:
        raise InvalidGeometry(
            f"4:2:0 subsampling needs even dimensions, got {width}x{height}"
        )


class YuvSequence:
    """Random-access handle over a raw YUV420p file.

    The file is memory-mapped read-only, so concurrent ``read_frame`` calls
    from several threads are safe and never mutate the handle.
    """

    def __init__(self, path, width: int, height: int, bit_depth: int = 8,
                 frame_rate: float = 30.0):
        validate_geometry(width, height, bit_depth)
        self.path = Path(path)
        if not self.path.is_file():
            raise FileNotFoundError(f"no such file: {self.path}")
        size = os.path.getsize(self.path)
        frame_size = width * height * 3 // 2
        if size % frame_size:
            raise TruncatedFile(
                f"{self.path}: {size} bytes is not a multiple of the "
                f"{width}x{height} frame size ({frame_size} bytes)"
            )
        self.geometry = VideoGeometry(width, height, bit_depth, frame_rate,
                                      size // frame_size)
        if size:
            self._data = np.memmap(self.path, dtype=np.uint8, mode="r")
        else:
            self._data = np.zeros(0, dtype=np.uint8)

    @property
    def frame_count(self) -> int:
        return self.geometry.frame_count

    def __len__(self) -> int:
        return self.frame_count

    def read_frame(self, index: int) -> FramePlanes:
        g = self.geometry
        if not 0 <= index < g.frame_count:
            raise IndexOutOfRange(
                f"frame {index} out of range [0, {g.frame_count})"
            )
        start = index * g.frame_size
        raw = self._data[start:start + g.frame_size]
        ch, cw = g.chroma_shape
        csize = ch * cw
        y = np.array(raw[:g.luma_size]).reshape(g.height, g.width)
        u = np.array(raw[g.luma_size:g.luma_size + csize]).reshape(ch, cw)
        v = np.array(raw[g.luma_size + csize:]).reshape(ch, cw)
        return FramePlanes(y, u, v, index)

    def __iter__(self) -> Iterator[FramePlanes]:
        for k in range(self.frame_count):
            yield self.read_frame(k)

    def close(self) -> None:
        mm = getattr(self._data, "_mmap", None)
        if mm is not None:
            mm.close()
        self._data = np.zeros(0, dtype=np.uint8)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class MemorySequence:
    """In-memory stand-in for ``YuvSequence`` used by synthetic content."""

    def __init__(self, frames: list[FramePlanes], frame_rate: float = 30.0):
        if not frames:
            raise InvalidGeometry("a sequence needs at least one frame")
        h, w = frames[0].y.shape
        self.geometry = VideoGeometry(w, h, 8, frame_rate, len(frames))
        self._frames = [
            FramePlanes(f.y, f.u, f.v, k) for k, f in enumerate(frames)
        ]

    @property
    def frame_count(self) -> int:
        return len(self._frames)

    def __len__(self) -> int:
        return len(self._frames)

    def read_frame(self, index: int) -> FramePlanes:
        if not 0 <= index < len(self._frames):
            raise IndexOutOfRange(
                f"frame {index} out of range [0, {len(self._frames)})"
            )
        return self._frames[index]

    def __iter__(self) -> Iterator[FramePlanes]:
        return iter(self._frames)


def open_sequence(path, width: int, height: int, bit_depth: int = 8,
                  frame_rate: float = 30.0) -> YuvSequence:
    return YuvSequence(path, width, height, bit_depth, frame_rate)


def read_frame(handle, index: int) -> FramePlanes:
    return handle.read_frame(index)


def write_sequence(path, frames) -> None:
    """Write frames as raw YUV420p; samples are clipped into uint8 range."""
    with open(path, "wb") as fh:
        for frame in frames:
            for plane in (frame.y, frame.u, frame.v):
                arr = np.asarray(plane)
                if arr.dtype != np.uint8:
                    arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
                fh.write(np.ascontiguousarray(arr).tobytes())
