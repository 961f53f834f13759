import threading

import numpy as np
import pytest

from framebits.errors import IndexOutOfRange, InvalidGeometry, TruncatedFile
from framebits.media_io import (
    FramePlanes,
    MemorySequence,
    VideoGeometry,
    open_sequence,
    read_frame,
    write_sequence,
)


def _random_frames(n, w, h, seed=0):
    rng = np.random.default_rng(seed)
    return [FramePlanes(rng.integers(0, 256, (h, w), dtype=np.uint8),
                        rng.integers(0, 256, (h // 2, w // 2), dtype=np.uint8),
                        rng.integers(0, 256, (h // 2, w // 2), dtype=np.uint8), k)
            for k in range(n)]


@pytest.mark.parametrize("w,h,size,count", [(64, 64, 6144, 1), (128, 64, 36864, 3)])
def test_frame_count(tmp_path, w, h, size, count):
    p = tmp_path / "a.yuv"
    p.write_bytes(bytes(size))
    with open_sequence(p, w, h) as seq:
        assert seq.frame_count == count


def test_truncated(tmp_path):
    p = tmp_path / "a.yuv"
    p.write_bytes(bytes(6145))
    with pytest.raises(TruncatedFile):
        open_sequence(p, 64, 64)


def test_zero_file_and_bounds(tmp_path):
    p = tmp_path / "z.yuv"
    p.write_bytes(bytes(6144 * 2))
    seq = open_sequence(p, 64, 64)
    f = read_frame(seq, 0)
    assert f.y.shape == (64, 64) and f.u.shape == (32, 32)
    assert not any(plane.any() for plane in f)
    with pytest.raises(IndexOutOfRange):
        seq.read_frame(seq.frame_count)
    with pytest.raises(IndexOutOfRange):
        seq.read_frame(-1)


def test_constant_roundtrip(tmp_path):
    frame = FramePlanes(np.full((16, 32), 10, np.uint8), np.full((8, 16), 20, np.uint8),
                        np.full((8, 16), 30, np.uint8))
    p = tmp_path / "c.yuv"
    write_sequence(p, [frame])
    back = open_sequence(p, 32, 16).read_frame(0)
    assert (back.y == 10).all() and (back.u == 20).all() and (back.v == 30).all()


def test_roundtrip_bytes(tmp_path):
    frames = _random_frames(4, 48, 32)
    p = tmp_path / "r.yuv"
    write_sequence(p, frames)
    raw = b"".join(pl.tobytes() for f in frames for pl in f)
    assert p.read_bytes() == raw
    with open_sequence(p, 48, 32) as seq:
        for orig, back in zip(frames, seq):
            for a, b in zip(orig, back):
                np.testing.assert_array_equal(a, b)


def test_random_access_matches_iteration(tmp_path):
    p = tmp_path / "r.yuv"
    write_sequence(p, _random_frames(6, 32, 32, seed=1))
    seq = open_sequence(p, 32, 32)
    frames = list(seq)
    for k in (5, 0, 3, 3, 1):
        np.testing.assert_array_equal(seq.read_frame(k).y, frames[k].y)


def test_concurrent_reads(tmp_path):
    p = tmp_path / "r.yuv"
    frames = _random_frames(8, 32, 32, seed=2)
    write_sequence(p, frames)
    seq = open_sequence(p, 32, 32)
    errors = []

    def reader(offset):
        for i in range(40):
            k = (i + offset) % 8
            if not np.array_equal(seq.read_frame(k).v, frames[k].v):
                errors.append(k)

    threads = [threading.Thread(target=reader, args=(t,)) for t in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors


@pytest.mark.parametrize("w,h,depth", [(63, 64, 8), (64, 0, 8), (64, 64, 10)])
def test_invalid_geometry(w, h, depth):
    with pytest.raises(InvalidGeometry):
        VideoGeometry(w, h, depth)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        open_sequence(tmp_path / "nope.yuv", 64, 64)


def test_memory_sequence():
    seq = MemorySequence(_random_frames(3, 32, 32))
    assert seq.frame_count == 3 and seq.geometry.width == 32
    assert [f.index for f in seq] == [0, 1, 2]
