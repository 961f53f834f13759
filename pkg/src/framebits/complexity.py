"""Block-DCT complexity descriptors.

Per plane, every ``w x w`` block (edge-replicated at the borders) is
transformed with an orthonormal type-II DCT. From the coefficients we take

* texture energy ``E``: frequency-weighted sum of absolute AC coefficients
  divided by the block area, averaged over blocks;
* brightness ``L``: ``|DC| / w`` averaged over blocks, which equals the mean
  sample value;
* temporal gradient ``h``: mean absolute difference of per-block luma
  energies between a frame and the frame ``gap`` positions earlier.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .errors import GridMismatch, InvalidConfig, ParseError, SchemaError

ALLOWED_GAPS = (1, 2, 4, 8, 16, 32)
DEFAULT_BLOCK_SIZE = 32

FEATURE_COLUMNS = ("frame_index", "E_Y", "L_Y", "E_U", "L_U", "E_V", "L_V") + tuple(
    f"h_gap{g}" for g in ALLOWED_GAPS
)

WeightSpec = Union[str, Callable[[int], np.ndarray]]


@lru_cache(maxsize=None)
def dct_matrix(w: int) -> np.ndarray:
    """Orthonormal DCT-II basis; row k holds frequency k."""
    k = np.arange(w)[:, None]
    n = np.arange(w)[None, :]
    mat = np.sqrt(2.0 / w) * np.cos(np.pi * (2 * n + 1) * k / (2 * w))
    mat[0] /= np.sqrt(2.0)
    mat.setflags(write=False)
    return mat


def _exp2_weights(w: int) -> np.ndarray:
    i = np.arange(w)
    return 2.0 ** ((i[:, None] + i[None, :]) / w)


def _uniform_weights(w: int) -> np.ndarray:
    return np.ones((w, w))


WEIGHTS = {"exp2": _exp2_weights, "uniform": _uniform_weights}


def frequency_weights(w: int, weight: WeightSpec = "exp2") -> np.ndarray:
    """AC weighting matrix with the DC slot zeroed."""
    if callable(weight):
        mat = np.array(weight(w), dtype=np.float64)
    else:
        try:
            mat = WEIGHTS[weight](w)
        except KeyError:
            raise InvalidConfig(
                f"unknown weight {weight!r}; choose from {sorted(WEIGHTS)}"
            ) from None
    if mat.shape != (w, w):
        raise InvalidConfig(f"weight matrix must be {w}x{w}, got {mat.shape}")
    mat = mat.copy()
    mat[0, 0] = 0.0
    return mat


def _ac_transform(blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # The block mean is removed before the transform so that constant blocks
    # produce exactly zero AC coefficients; DC follows from the sum.
    w = blocks.shape[-1]
    d = dct_matrix(w)
    means = blocks.sum(axis=(-2, -1)) / (w * w)
    centered = blocks - means[..., None, None]
    coeffs = d @ centered @ d.T
    return coeffs, means


def block_dct(block) -> np.ndarray:
    """2-D orthonormal DCT-II of a square block (or a stack of blocks)."""
    blocks = np.asarray(block, dtype=np.float64)
    if blocks.ndim < 2 or blocks.shape[-1] != blocks.shape[-2]:
        raise ValueError(f"expected square block(s), got shape {blocks.shape}")
    coeffs, means = _ac_transform(blocks)
    coeffs[..., 0, 0] = means * blocks.shape[-1]
    return coeffs


def split_blocks(plane, block_size: int = DEFAULT_BLOCK_SIZE) -> np.ndarray:
    """Tile a plane into ``(n_blocks, w, w)``, edge-replicating the borders."""
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D plane, got shape {arr.shape}")
    w = block_size
    h, wd = arr.shape
    ph = -(-h // w) * w
    pw = -(-wd // w) * w
    if (ph, pw) != (h, wd):
        arr = np.pad(arr, ((0, ph - h), (0, pw - wd)), mode="edge")
    return arr.reshape(ph // w, w, pw // w, w).swapaxes(1, 2).reshape(-1, w, w)


class TextureStats(NamedTuple):
    E: float
    L: float
    block_energies: np.ndarray


def frame_texture(plane, block_size: int = DEFAULT_BLOCK_SIZE,
                  weight: WeightSpec = "exp2") -> TextureStats:
    blocks = split_blocks(plane, block_size)
    coeffs, means = _ac_transform(blocks)
    weights = frequency_weights(block_size, weight)
    energies = (np.abs(coeffs) * weights).sum(axis=(1, 2)) / block_size**2
    # |DC| / w == |block mean| for the orthonormal transform
    brightness = np.abs(means)
    return TextureStats(float(energies.mean()), float(brightness.mean()), energies)


def temporal_gradient(current_energies, reference_energies) -> float:
    cur = np.asarray(current_energies, dtype=np.float64)
    ref = np.asarray(reference_energies, dtype=np.float64)
    if cur.shape != ref.shape:
        raise GridMismatch(
            f"block grids differ: {cur.shape} vs {ref.shape}"
        )
    return float(np.abs(cur - ref).mean())


@dataclass
class ComplexityRecord:
    frame_index: int
    E_Y: float
    L_Y: float
    E_U: float
    L_U: float
    E_V: float
    L_V: float
    h_by_gap: dict[int, float] = field(default_factory=dict)

    def spatial(self) -> tuple[float, ...]:
        return (self.E_Y, self.L_Y, self.E_U, self.L_U, self.E_V, self.L_V)


def validate_gaps(gaps) -> tuple[int, ...]:
    gaps = tuple(sorted(set(int(g) for g in gaps)))
    bad = [g for g in gaps if g not in ALLOWED_GAPS]
    if bad:
        raise InvalidConfig(f"gaps must be drawn from {ALLOWED_GAPS}, got {bad}")
    return gaps


def _analyze_frame(frame, block_size, weight):
    y = frame_texture(frame.y, block_size, weight)
    u = frame_texture(frame.u, block_size, weight)
    v = frame_texture(frame.v, block_size, weight)
    return (y.E, y.L, u.E, u.L, v.E, v.L), y.block_energies


def analyze_sequence(handle, gaps: Sequence[int] = ALLOWED_GAPS,
                     block_size: int = DEFAULT_BLOCK_SIZE,
                     threads: int = 1,
                     weight: WeightSpec = "exp2") -> list[ComplexityRecord]:
    """One ``ComplexityRecord`` per frame of ``handle``.

    Spatial features are computed per frame (optionally on a thread pool);
    temporal gradients are a second pass over the cached luma block energies.
    Results do not depend on ``threads``.
    """
    gaps = validate_gaps(gaps)
    if block_size < 1:
        raise InvalidConfig(f"block size must be positive, got {block_size}")
    n = handle.frame_count

    def work(k):
        return _analyze_frame(handle.read_frame(k), block_size, weight)

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n)))
    else:
        results = [work(k) for k in range(n)]

    energies = [r[1] for r in results]
    records = []
    for k, (spatial, _) in enumerate(results):
        h = {g: temporal_gradient(energies[k], energies[k - g])
             for g in gaps if k >= g}
        records.append(ComplexityRecord(k, *spatial, h_by_gap=h))
    return records


def _fmt(x: float) -> str:
    return repr(float(x))


def write_features_csv(records, path_or_file) -> None:
    """Fixed column order: frame_index, E/L per plane, h_gap1..h_gap32."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_COLUMNS)
        for r in records:
            row = [str(r.frame_index)] + [_fmt(x) for x in r.spatial()]
            row += [_fmt(r.h_by_gap[g]) if g in r.h_by_gap else ""
                    for g in ALLOWED_GAPS]
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def read_features_csv(path) -> list[ComplexityRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != FEATURE_COLUMNS:
            raise SchemaError(f"{path}: unexpected feature header {header}", line=1)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FEATURE_COLUMNS):
                raise ParseError(f"{path}: expected {len(FEATURE_COLUMNS)} fields",
                                 line=lineno)
            try:
                idx = int(row[0])
                spatial = [float(x) for x in row[1:7]]
                h = {g: float(x) for g, x in zip(ALLOWED_GAPS, row[7:]) if x != ""}
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line=lineno) from None
            if not all(math.isfinite(x) and x >= 0 for x in spatial + list(h.values())):
                raise ParseError(f"{path}: features must be finite and >= 0",
                                 line=lineno)
            records.append(ComplexityRecord(idx, *spatial, h_by_gap=h))
    return records
