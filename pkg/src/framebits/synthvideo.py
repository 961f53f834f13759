"""Synthetic moving-texture sequences and labelled corpora built from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complexity import ALLOWED_GAPS, DEFAULT_BLOCK_SIZE, analyze_sequence
from .dataset import DEFAULT_BASE_QPS, SequenceData, SyntheticOracleParams, sweep_encode
from .gop import DEFAULT_LEVEL_OFFSETS, GopConfig, classify_frames
from .media_io import FramePlanes, MemorySequence


def periodic_noise(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    """Unit-variance Gaussian random field, low-passed at ``scale`` samples.

    The field is periodic, so rolling it never shows a seam.
    """
    white = rng.standard_normal(shape)
    if scale <= 0:
        return white
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.rfftfreq(shape[1])[None, :]
    spectrum = np.fft.rfft2(white) * np.exp(-((fy**2 + fx**2) * (np.pi * scale) ** 2))
    field = np.fft.irfft2(spectrum, s=shape)
    std = field.std()
    return field / std if std > 0 else field


@dataclass(frozen=True)
class ContentParams:
    brightness: float
    smooth_amp: float
    smooth_scale: float
    detail_amp: float
    velocity: tuple
    detail_velocity: tuple
    pulse: float
    chroma_amp: tuple
    chroma_detail: tuple

    @classmethod
    def random(cls, rng: np.random.Generator, complexity: float | None = None):
        c = rng.uniform(0.0, 1.0) if complexity is None else complexity
        return cls(
            brightness=rng.uniform(50, 200),
            smooth_amp=rng.uniform(5, 40),
            smooth_scale=rng.uniform(3, 16),
            detail_amp=c * 30.0,
            velocity=tuple(int(v) for v in rng.integers(-3, 4, size=2)),
            detail_velocity=tuple(int(v) for v in rng.integers(-6, 7, size=2)),
            pulse=rng.uniform(0.0, 0.8),
            chroma_amp=tuple(rng.uniform(2, 25, size=2)),
            chroma_detail=tuple(rng.uniform(0, 15, size=2)),
        )


def generate_sequence(seed: int, width: int = 128, height: int = 128,
                      frames: int = 33, complexity: float | None = None,
                      frame_rate: float = 30.0) -> MemorySequence:
    """Moving textured content with a pulsing, independently moving detail layer."""
    rng = np.random.default_rng(seed)
    p = ContentParams.random(rng, complexity)
    shape = (height, width)
    cshape = (height // 2, width // 2)
    smooth = p.smooth_amp * periodic_noise(rng, shape, p.smooth_scale)
    detail = periodic_noise(rng, shape, 0.6)
    mask = np.clip(0.5 + periodic_noise(rng, shape, 20.0), 0.0, 1.5)
    chroma = []
    for amp, det in zip(p.chroma_amp, p.chroma_detail):
        chroma.append((amp * periodic_noise(rng, cshape, 6.0),
                       det * periodic_noise(rng, cshape, 0.6)))
    phase = rng.uniform(0, 2 * np.pi)
    vy, vx = p.velocity
    dy, dx = p.detail_velocity

    out = []
    for k in range(frames):
        amp = p.detail_amp * (1.0 + p.pulse * np.sin(0.35 * k + phase))
        moving_detail = np.roll(detail * amp, (k * dy, k * dx), axis=(0, 1))
        y = p.brightness + np.roll(smooth, (k * vy, k * vx), axis=(0, 1))
        y = y + moving_detail * np.roll(mask, (k * vy, k * vx), axis=(0, 1))
        planes = [np.clip(np.rint(y), 0, 255).astype(np.uint8)]
        for base, det in chroma:
            c = 128.0 + np.roll(base, (k * vy // 2, k * vx // 2), axis=(0, 1))
            c = c + np.roll(det, (k * dy // 2, k * dx // 2), axis=(0, 1)) * (amp / 30.0 + 0.2)
            planes.append(np.clip(np.rint(c), 0, 255).astype(np.uint8))
        out.append(FramePlanes(*planes, k))
    return MemorySequence(out, frame_rate)


def static_sequence(frames: int, width: int = 64, height: int = 64, seed: int = 0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 256, (height, width), dtype=np.uint8)
    u = rng.integers(0, 256, (height // 2, width // 2), dtype=np.uint8)
    v = rng.integers(0, 256, (height // 2, width // 2), dtype=np.uint8)
    return MemorySequence([FramePlanes(y, u, v, k) for k in range(frames)])


def synthetic_corpus(n_sequences: int, params: SyntheticOracleParams,
                     frames: int = 33, width: int = 128, height: int = 128,
                     seed: int = 0, gop: GopConfig | None = None,
                     base_qps=DEFAULT_BASE_QPS, level_offsets=DEFAULT_LEVEL_OFFSETS,
                     gaps=ALLOWED_GAPS, block_size: int = DEFAULT_BLOCK_SIZE,
                     threads: int = 1) -> list[SequenceData]:
    """Generate, analyze and oracle-encode ``n_sequences`` synthetic clips."""
    gop = gop or GopConfig()
    corpus = []
    for i in range(n_sequences):
        seq = generate_sequence(seed * 100_003 + i, width, height, frames)
        features = analyze_sequence(seq, gaps, block_size, threads)
        roles = classify_frames(frames, gop)
        sid = f"syn{i:03d}"
        truth = sweep_encode(features, roles, params, base_qps, level_offsets, sid)
        corpus.append(SequenceData(sid, features, roles, truth))
    return corpus
