import math

import numpy as np
import pytest

from framebits.dataset import SyntheticOracleParams
from framebits.synthvideo import synthetic_corpus


def naive_dct2(block):
    """Orthonormal 2-D DCT-II by the textbook quadruple sum."""
    block = np.asarray(block, dtype=np.float64)
    w = block.shape[0]
    out = np.zeros((w, w))
    for u in range(w):
        cu = math.sqrt(1.0 / w) if u == 0 else math.sqrt(2.0 / w)
        for v in range(w):
            cv = math.sqrt(1.0 / w) if v == 0 else math.sqrt(2.0 / w)
            s = 0.0
            for x in range(w):
                cx = math.cos((2 * x + 1) * u * math.pi / (2 * w))
                for y in range(w):
                    s += block[x, y] * cx * math.cos((2 * y + 1) * v * math.pi / (2 * w))
            out[u, v] = cu * cv * s
    return out


def naive_dct2_batch(blocks):
    """Quadruple-sum DCT of many blocks at once.

    The full ``w**4`` basis tensor is built from the cosine definition and
    contracted against every block, so the work is the textbook double sum
    per coefficient.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    w = blocks.shape[-1]
    n = np.arange(w)
    scale = np.where(n == 0, math.sqrt(1.0 / w), math.sqrt(2.0 / w))
    cos = np.cos((2 * n[None, :] + 1) * n[:, None] * math.pi / (2 * w))  # [u, x]
    basis = (scale[:, None, None, None] * scale[None, :, None, None]
             * cos[:, None, :, None] * cos[None, :, None, :])  # [u, v, x, y]
    flat = blocks.reshape(len(blocks), w * w)
    return (flat @ basis.reshape(w * w, w * w).T).reshape(blocks.shape)


def smooth_curve(rng, n=4):
    """Rate-quality points on a random smooth, increasing log-rate curve."""
    q = np.sort(rng.uniform(28, 42, n))
    while np.any(np.diff(q) < 0.5):
        q = np.sort(rng.uniform(28, 42, n))
    a, b = rng.uniform(2.5, 3.5), rng.uniform(0.05, 0.12)
    c = rng.uniform(0, 0.002)
    log_r = a + b * (q - 28) + c * (q - 28) ** 2
    return [(10 ** lr, qq) for lr, qq in zip(log_r, q)]


def loop_gradient(cur, ref):
    total = 0.0
    for a, b in zip(cur, ref):
        total += abs(a - b)
    return total / len(cur)


@pytest.fixture(scope="session")
def small_corpus():
    params = SyntheticOracleParams(epsilon=0.1, seed=3)
    return synthetic_corpus(12, params, frames=33, seed=7)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
