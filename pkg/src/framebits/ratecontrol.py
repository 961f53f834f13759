"""Second-pass QP refinement and a simulated GOP-level rate-control loop.

For every frame the first pass supplies a QP ``q`` and a predicted size
``b_hat``. Given a target ``b_prime`` the refined QP is

    q_bar   = q - c_low * sqrt(max(1, q)) * log2(b_prime / b_hat)
    q_prime = round(q_bar + c_high * max(0, q_start - q_bar))

clamped to [0, 63]; ``round`` is half away from zero. Each GOP's budget is
split across its frames in proportion to ``b_hat``, and whatever the loop
over- or undershoots is taken out of the following GOP budgets.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dataset import SyntheticOracleParams, feature_row, oracle_bits, reference_gradients
from .errors import EmptyGop, InvalidConfig, NonPositiveBits, NonPositivePrediction, ReplayMiss
from .gop import DEFAULT_LEVEL_OFFSETS, QP_MAX, QP_MIN, cascade_qps, gop_groups
from .metrics import rate_deviation

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
FLOOR_FRACTION = 0.1
MIN_PREDICTED_BITS = 1.0


@dataclass(frozen=True)
class RcConstants:
    c_low: float = 1.0
    c_high: float = 0.5
    q_start: int = 24

    def __post_init__(self):
        if not self.c_low > 0:
            raise InvalidConfig(f"c_low must be > 0, got {self.c_low}")
        if not 0 < self.c_high < 1:
            raise InvalidConfig(f"c_high must lie in (0, 1), got {self.c_high}")
        if not QP_MIN <= self.q_start <= QP_MAX:
            raise InvalidConfig(f"q_start must lie in [0, 63], got {self.q_start}")


def c_high_for_height(height: int) -> float:
    """0.5 at 2160 lines and above, 0.25 at 480 and below, log2-linear between."""
    if height >= 2160:
        return 0.5
    if height <= 480:
        return 0.25
    t = (math.log2(height) - math.log2(480)) / (math.log2(2160) - math.log2(480))
    return 0.25 + 0.25 * t


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def qp_refine(q: float, b_hat: float, b_prime: float,
              k: RcConstants = RcConstants()) -> tuple[float, int]:
    if not (b_hat > 0 and b_prime > 0):
        raise NonPositiveBits(f"bit counts must be > 0 (b_hat={b_hat}, b_prime={b_prime})")
    q_bar = q - k.c_low * math.sqrt(max(1.0, q)) * math.log2(b_prime / b_hat)
    q_prime = round_half_away(q_bar + k.c_high * max(0.0, k.q_start - q_bar))
    if not QP_MIN <= q_prime <= QP_MAX:
        log.info("refined QP %d clamped into [%d, %d]", q_prime, QP_MIN, QP_MAX)
        q_prime = min(QP_MAX, max(QP_MIN, q_prime))
    return q_bar, q_prime


def allocate_gop(target_gop_bits: float, predictions) -> list[float]:
    """Split a GOP budget proportionally to predicted frame sizes.

    The last frame absorbs the rounding remainder so the shares add up to
    the budget.
    """
    preds = [float(p) for p in predictions]
    if not preds:
        raise EmptyGop("cannot allocate bits to an empty GOP")
    if any(not p > 0 for p in preds):
        raise NonPositivePrediction("every predicted frame size must be > 0")
    if not target_gop_bits > 0:
        raise NonPositiveBits(f"GOP target must be > 0, got {target_gop_bits}")
    total = math.fsum(preds)
    shares = [target_gop_bits * p / total for p in preds]
    shares[-1] = target_gop_bits - math.fsum(shares[:-1])
    return shares


def compensate(deficit: float, next_gop_target: float,
               strength: float = 1.0) -> tuple[float, float]:
    """Budget for the next GOP after paying back ``strength * deficit``.

    The budget never drops below 10% of ``next_gop_target``; the part of the
    payback that did not fit is returned as the carried remainder.
    """
    if not 0 < strength <= 1:
        raise InvalidConfig(f"strength must lie in (0, 1], got {strength}")
    wanted = next_gop_target - strength * deficit
    floor = FLOOR_FRACTION * next_gop_target
    adjusted = max(wanted, floor)
    return adjusted, adjusted - wanted


# ---------------------------------------------------------------- backends

class OracleBackend:
    """Achieved bits from the synthetic encoder model."""

    def __init__(self, features, roles, params: SyntheticOracleParams,
                 sequence_id: str = "synthetic"):
        self.features = features
        self.roles = roles
        self.params = params
        self.sequence_id = sequence_id

    def bits(self, frame_index: int, q: int) -> tuple[float, bool]:
        role = self.roles[frame_index]
        h = reference_gradients(self.features, role)
        b = oracle_bits(self.params, self.features[frame_index], h, role.frame_type,
                        q, self.sequence_id, frame_index)
        return b, False


class ReplayBackend:
    """Achieved bits looked up in an encoder log.

    QPs missing from the log are interpolated (or extrapolated) log-linearly
    from the two nearest logged QPs of the same frame, and flagged.
    """

    def __init__(self, records, sequence_id: Optional[str] = None):
        table: dict[int, dict[int, float]] = defaultdict(dict)
        for r in records:
            if sequence_id is not None and r.sequence_id != sequence_id:
                continue
            table[r.frame_index].setdefault(r.q, r.bits)
        self.table = dict(table)

    def bits(self, frame_index: int, q: int) -> tuple[float, bool]:
        entries = self.table.get(frame_index)
        if not entries:
            raise ReplayMiss(f"log has no entry for frame {frame_index}")
        if q in entries:
            return entries[q], False
        if len(entries) < 2:
            raise ReplayMiss(
                f"frame {frame_index}: QP {q} not logged and only one QP to extrapolate from"
            )
        nearest = sorted(entries, key=lambda x: (abs(x - q), x))[:2]
        q0, q1 = sorted(nearest)
        l0, l1 = math.log(entries[q0]), math.log(entries[q1])
        return math.exp(l0 + (l1 - l0) * (q - q0) / (q1 - q0)), True


# ------------------------------------------------------------------ session

@dataclass
class FrameRcDecision:
    frame_index: int
    frame_type: str
    gop: int
    q: int
    b_hat: float
    b_prime: float
    q_bar: float
    q_prime: int
    achieved_bits: float
    deficit_after: float
    clamped: bool = False
    interpolated: bool = False


@dataclass
class RcSessionReport:
    decisions: list
    total_target_bits: float
    total_achieved_bits: float
    base_qp: int
    constants: RcConstants
    carried: list = field(default_factory=list)

    @property
    def deviation_percent(self) -> float:
        """Signed deviation of the achieved total from the target."""
        return 100.0 * (self.total_achieved_bits - self.total_target_bits) / self.total_target_bits

    @property
    def abs_deviation_percent(self) -> float:
        return rate_deviation(self.total_achieved_bits, self.total_target_bits)

    @property
    def final_deficit(self) -> float:
        return self.decisions[-1].deficit_after if self.decisions else 0.0

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "base_qp": self.base_qp,
            "constants": asdict(self.constants),
            "total_target_bits": self.total_target_bits,
            "total_achieved_bits": self.total_achieved_bits,
            "deviation_percent": self.deviation_percent,
            "abs_deviation_percent": self.abs_deviation_percent,
            "final_deficit": self.final_deficit,
            "gop_carry": list(self.carried),
            "frames": [asdict(d) for d in self.decisions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "base_qp", "constants", "total_target_bits",
                 "total_achieved_bits", "deviation_percent", "abs_deviation_percent",
                 "final_deficit", "gop_carry", "frames"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "base_qp": {"type": "integer", "minimum": 0, "maximum": 63},
        "constants": {
            "type": "object",
            "required": ["c_low", "c_high", "q_start"],
            "properties": {
                "c_low": {"type": "number", "exclusiveMinimum": 0},
                "c_high": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "q_start": {"type": "integer", "minimum": 0, "maximum": 63},
            },
        },
        "total_target_bits": {"type": "number", "exclusiveMinimum": 0},
        "total_achieved_bits": {"type": "number", "minimum": 0},
        "deviation_percent": {"type": "number"},
        "abs_deviation_percent": {"type": "number", "minimum": 0},
        "final_deficit": {"type": "number"},
        "gop_carry": {"type": "array", "items": {"type": "number"}},
        "frames": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frame_index", "frame_type", "gop", "q", "b_hat", "b_prime",
                             "q_bar", "q_prime", "achieved_bits", "deficit_after",
                             "clamped", "interpolated"],
                "properties": {
                    "frame_index": {"type": "integer", "minimum": 0},
                    "frame_type": {"enum": ["I", "P", "B"]},
                    "gop": {"type": "integer", "minimum": 0},
                    "q": {"type": "integer", "minimum": 0, "maximum": 63},
                    "b_hat": {"type": "number", "exclusiveMinimum": 0},
                    "b_prime": {"type": "number", "exclusiveMinimum": 0},
                    "q_bar": {"type": "number"},
                    "q_prime": {"type": "integer", "minimum": 0, "maximum": 63},
                    "achieved_bits": {"type": "number", "exclusiveMinimum": 0},
                    "deficit_after": {"type": "number"},
                    "clamped": {"type": "boolean"},
                    "interpolated": {"type": "boolean"},
                },
            },
        },
    },
}


def predict_frames(features, roles, predictors, qps) -> dict[int, float]:
    """Predicted bits of every frame at the QPs in ``qps``.

    Predictions are floored at one bit so that they stay usable as
    allocation weights.
    """
    out = {}
    for ftype in ("I", "P", "B"):
        idx = [r.frame_index for r in roles if r.frame_type == ftype]
        if not idx:
            continue
        model = predictors.get(ftype)
        if model is None:
            raise InvalidConfig(f"no predictor for {ftype}-frames")
        use_chroma = "E_U" in model.feature_names
        X = np.array([feature_row(features, roles[k], qps[k],
                                  [qps[r] for r in roles[k].refs], use_chroma)
                      for k in idx])
        for k, b in zip(idx, model.predict(X)):
            out[k] = max(float(b), MIN_PREDICTED_BITS)
    return out


def choose_base_qp(features, roles, predictors, target_total_bits: float,
                   level_offsets=DEFAULT_LEVEL_OFFSETS, qp_range=(QP_MIN, QP_MAX)) -> int:
    """Base QP whose predicted total size is closest (in log) to the target."""
    best, best_err = qp_range[0], math.inf
    for base in range(qp_range[0], qp_range[1] + 1):
        pred = predict_frames(features, roles, predictors,
                              cascade_qps(roles, base, level_offsets))
        err = abs(math.log(math.fsum(pred.values()) / target_total_bits))
        if err < best_err:
            best, best_err = base, err
    return best


def simulate_session(features, roles, predictors, target_bitrate: float,
                     frame_rate: float, constants: RcConstants, backend,
                     level_offsets=DEFAULT_LEVEL_OFFSETS, base_qp: Optional[int] = None,
                     strength: float = 1.0, per_frame: bool = False,
                     qp_range=(QP_MIN, QP_MAX)) -> RcSessionReport:
    """Run the two-pass loop GOP by GOP against ``backend``.

    Each GOP is budgeted its predicted share of the sequence target, minus
    whatever earlier GOPs overspent (see ``compensate``).

    ``base_qp`` fixes the first-pass QP; by default it is searched within
    ``qp_range`` so that the predicted sequence size matches the budget.
    Keep that range inside the QPs the predictors were trained on: tree
    models are flat outside it. With ``per_frame`` the
    remaining GOP budget is re-split after every coded frame instead of only
    at GOP boundaries.
    """
    if not (target_bitrate > 0 and frame_rate > 0):
        raise NonPositiveBits("target bitrate and frame rate must be > 0")
    if len(features) != len(roles):
        raise InvalidConfig(f"{len(features)} feature records for {len(roles)} frames")
    bits_per_frame = target_bitrate / frame_rate
    total_target = bits_per_frame * len(roles)
    if base_qp is None:
        base_qp = choose_base_qp(features, roles, predictors, total_target, level_offsets,
                                 qp_range)
    first_qps = cascade_qps(roles, base_qp, level_offsets)
    b_hat = predict_frames(features, roles, predictors, first_qps)

    decisions: list[FrameRcDecision] = []
    carried = []
    achieved_sum: list[float] = []
    nominal_sum: list[float] = []
    gop_targets: list[float] = []
    # the first pass sees the whole sequence, so each GOP's nominal budget is
    # its predicted share of the total rather than a flat per-frame rate
    pred_total = math.fsum(b_hat.values())
    for g, group in enumerate(gop_groups(roles)):
        nominal = total_target * math.fsum(b_hat[k] for k in group) / pred_total
        deficit = math.fsum(achieved_sum) - math.fsum(gop_targets)
        budget, carry = compensate(deficit, nominal, strength)
        carried.append(carry)
        gop_targets.append(nominal)
        preds = [b_hat[k] for k in group]
        shares = allocate_gop(budget, preds)
        nominal_shares = allocate_gop(nominal, preds)
        spent = []
        for i, k in enumerate(group):
            if per_frame and i > 0:
                remaining = budget - math.fsum(spent)
                planned = math.fsum(shares[i:])
                remaining = max(remaining, FLOOR_FRACTION * planned)
                shares[i:] = allocate_gop(remaining, preds[i:])
            q_bar, q_prime = qp_refine(first_qps[k], b_hat[k], shares[i], constants)
            raw = q_bar + constants.c_high * max(0.0, constants.q_start - q_bar)
            clamped = round_half_away(raw) != q_prime
            bits, interpolated = backend.bits(k, q_prime)
            spent.append(bits)
            achieved_sum.append(bits)
            nominal_sum.append(nominal_shares[i])
            decisions.append(FrameRcDecision(
                frame_index=k, frame_type=roles[k].frame_type, gop=g, q=first_qps[k],
                b_hat=b_hat[k], b_prime=shares[i], q_bar=q_bar, q_prime=q_prime,
                achieved_bits=bits,
                deficit_after=math.fsum(achieved_sum) - math.fsum(nominal_sum),
                clamped=clamped, interpolated=interpolated,
            ))
    return RcSessionReport(decisions, total_target, math.fsum(achieved_sum),
                           base_qp, constants, carried)


def calibrate_c_low(records) -> float:
    """Least-squares ``c_low`` from frames logged at several QPs.

    Each pair of consecutive QPs of one frame and encode tag gives one
    equation ``q2 - q1 = -c_low * sqrt(max(1, q1)) * log2(b2 / b1)``.
    """
    by_frame: dict[tuple, dict[int, float]] = defaultdict(dict)
    for r in records:
        by_frame[(r.sequence_id, r.frame_index)].setdefault(r.q, r.bits)
    num = den = 0.0
    for entries in by_frame.values():
        qs = sorted(entries)
        for q1, q2 in zip(qs, qs[1:]):
            a = -math.sqrt(max(1.0, q1)) * math.log2(entries[q2] / entries[q1])
            num += a * (q2 - q1)
            den += a * a
    if not den > 0:
        raise InvalidConfig("calibration needs frames logged at two or more QPs")
    return num / den
