"""Prediction accuracy, rate conformance and Bjontegaard delta-rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCurve,
    LengthMismatch,
    NoOverlap,
    ZeroTarget,
    ZeroTruth,
    ZeroVariance,
)


def _paired(y_true, y_pred, min_len: int):
    t = np.asarray(y_true, dtype=np.float64).ravel()
    p = np.asarray(y_pred, dtype=np.float64).ravel()
    if len(t) != len(p):
        raise LengthMismatch(f"{len(t)} targets vs {len(p)} predictions")
    if len(t) < min_len:
        raise LengthMismatch(f"need at least {min_len} samples, got {len(t)}")
    return t, p


def mape(y_true, y_pred) -> float:
    """Mean absolute percentage error, in percent."""
    t, p = _paired(y_true, y_pred, 1)
    if np.any(t == 0):
        raise ZeroTruth("MAPE is undefined when a true value is zero")
    return float(100.0 * np.mean(np.abs(t - p) / np.abs(t)))


def r2(y_true, y_pred) -> float:
    t, p = _paired(y_true, y_pred, 2)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise ZeroVariance("R^2 is undefined for constant ground truth")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def rate_deviation(achieved_total: float, target_total: float) -> float:
    """Absolute deviation from the target, in percent."""
    if not target_total > 0:
        raise ZeroTarget(f"target must be > 0, got {target_total}")
    return 100.0 * abs(achieved_total - target_total) / target_total


def combined_yuv_psnr(psnr_y: float, psnr_u: float, psnr_v: float) -> float:
    return (6.0 * psnr_y + psnr_u + psnr_v) / 8.0


# --------------------------------------------------------------- BD-rate

@dataclass(frozen=True)
class RdPoint:
    rate: float
    quality: float


def _edge_slope(h0, h1, m0, m1):
    d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > 3 * abs(m0):
        return 3.0 * m0
    return d


def pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Monotone (Fritsch-Carlson) derivative estimates at the knots."""
    h = np.diff(x)
    m = np.diff(y) / h
    n = len(x)
    d = np.zeros(n)
    if n == 2:
        d[:] = m[0]
        return d
    for k in range(1, n - 1):
        if m[k - 1] * m[k] <= 0:
            d[k] = 0.0
        else:
            w1 = 2 * h[k] + h[k - 1]
            w2 = h[k] + 2 * h[k - 1]
            d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k])
    d[0] = _edge_slope(h[0], h[1], m[0], m[1])
    d[-1] = _edge_slope(h[-1], h[-2], m[-1], m[-2])
    return d


class Pchip:
    """Piecewise cubic Hermite interpolant with monotone slopes."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.d = pchip_slopes(self.x, self.y)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        k = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, len(self.x) - 2)
        h = self.x[k + 1] - self.x[k]
        s = (t - self.x[k]) / h
        y0, y1 = self.y[k], self.y[k + 1]
        d0, d1 = self.d[k] * h, self.d[k + 1] * h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1

    def _primitive(self, k: int, s: float) -> float:
        # integral of segment k from its left knot to local coordinate s
        h = self.x[k + 1] - self.x[k]
        y0, y1 = self.y[k], self.y[k + 1]
        d0, d1 = self.d[k] * h, self.d[k + 1] * h
        s2, s3, s4 = s * s, s ** 3, s ** 4
        i00 = s - s3 + s4 / 2
        i10 = s2 / 2 - 2 * s3 / 3 + s4 / 4
        i01 = s3 - s4 / 2
        i11 = s4 / 4 - s3 / 3
        return h * (i00 * y0 + i10 * d0 + i01 * y1 + i11 * d1)

    def integrate(self, a: float, b: float) -> float:
        """Exact integral over ``[a, b]`` within the knot range."""
        if b < a:
            return -self.integrate(b, a)
        x = self.x
        ka = int(np.clip(np.searchsorted(x, a, side="right") - 1, 0, len(x) - 2))
        kb = int(np.clip(np.searchsorted(x, b, side="right") - 1, 0, len(x) - 2))
        sa = (a - x[ka]) / (x[ka + 1] - x[ka])
        sb = (b - x[kb]) / (x[kb + 1] - x[kb])
        if ka == kb:
            return self._primitive(ka, sb) - self._primitive(ka, sa)
        total = self._primitive(ka, 1.0) - self._primitive(ka, sa)
        for k in range(ka + 1, kb):
            total += self._primitive(k, 1.0)
        return total + self._primitive(kb, sb)


def _curve(points, name: str):
    pts = [p if isinstance(p, RdPoint) else RdPoint(*p) for p in points]
    if len(pts) < 4:
        raise DegenerateCurve(f"{name}: BD-rate needs at least 4 points, got {len(pts)}")
    pts.sort(key=lambda p: p.rate)
    rate = np.array([p.rate for p in pts], dtype=np.float64)
    quality = np.array([p.quality for p in pts], dtype=np.float64)
    if np.any(rate <= 0) or not np.all(np.isfinite(rate)) or not np.all(np.isfinite(quality)):
        raise DegenerateCurve(f"{name}: rates must be positive and values finite")
    if np.any(np.diff(rate) <= 0):
        raise DegenerateCurve(f"{name}: rates must be strictly increasing")
    if np.any(np.diff(quality) <= 0):
        raise DegenerateCurve(
            f"{name}: quality must strictly increase with rate to be interpolated"
        )
    return np.log10(rate), quality


def bd_rate(anchor, test, method: str = "pchip") -> float:
    """Average rate difference of ``test`` vs ``anchor`` at equal quality, in percent.

    ``method="pchip"`` integrates piecewise cubic Hermite interpolants of
    log10(rate) over quality exactly; ``method="cubic"`` uses the classic
    global third-order polynomial fit.
    """
    log_a, q_a = _curve(anchor, "anchor")
    log_t, q_t = _curve(test, "test")
    lo = max(q_a.min(), q_t.min())
    hi = min(q_a.max(), q_t.max())
    if not hi > lo:
        raise NoOverlap(f"quality ranges do not overlap ([{lo}, {hi}])")
    if method == "pchip":
        int_a = Pchip(q_a, log_a).integrate(lo, hi)
        int_t = Pchip(q_t, log_t).integrate(lo, hi)
    elif method == "cubic":
        pa = np.polyint(np.polyfit(q_a, log_a, 3))
        pt = np.polyint(np.polyfit(q_t, log_t, 3))
        int_a = np.polyval(pa, hi) - np.polyval(pa, lo)
        int_t = np.polyval(pt, hi) - np.polyval(pt, lo)
    else:
        raise ValueError(f"unknown BD interpolation {method!r}")
    avg = (int_t - int_a) / (hi - lo)
    return (math.pow(10.0, avg) - 1.0) * 100.0
