"""Training data assembly: encoder logs, feature matrices, synthetic labels, folds."""

from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    InvalidConfig,
    InvariantViolation,
    Misalignment,
    MissingFeature,
    ParseError,
    SchemaError,
    TooFewSequences,
)
from .complexity import read_features_csv
from .gop import DEFAULT_LEVEL_OFFSETS, cascade_qps, classify_frames

log = logging.getLogger(__name__)

FRAME_TYPES = ("I", "P", "B")
LOG_COLUMNS = ("sequence_id", "frame_index", "frame_type", "q", "q_ref1", "q_ref2", "bits")
OPTIONAL_LOG_COLUMNS = ("base_qp", "ref1", "ref2")
DEFAULT_BASE_QPS = tuple(range(20, 51, 5))
QP_RANGE = (0, 63)

_CHROMA = ("E_U", "L_U", "E_V", "L_V")
FEATURE_NAMES = {
    "I": ("E_Y", "L_Y", "E_U", "L_U", "E_V", "L_V", "q"),
    "P": ("E_Y", "h_ref", "L_Y", "E_U", "L_U", "E_V", "L_V", "q", "q_ref"),
    "B": ("E_Y", "h_ref1", "h_ref2", "L_Y", "E_U", "L_U", "E_V", "L_V",
          "q", "q_ref1", "q_ref2"),
}


def feature_names(frame_type: str, use_chroma: bool = True) -> tuple[str, ...]:
    names = FEATURE_NAMES[frame_type]
    if use_chroma:
        return names
    return tuple(n for n in names if n not in _CHROMA)


@dataclass
class FrameCodingRecord:
    sequence_id: str
    frame_index: int
    frame_type: str
    q: int
    q_ref1: Optional[int]
    q_ref2: Optional[int]
    bits: float
    base_qp: Optional[int] = None
    refs: tuple[int, ...] = ()

    def validate(self, line: Optional[int] = None) -> None:
        if self.frame_type not in FRAME_TYPES:
            raise SchemaError(f"unknown frame_type {self.frame_type!r}", line)
        if self.frame_type in ("P", "B") and self.q_ref1 is None:
            raise SchemaError(f"{self.frame_type}-frame needs q_ref1", line)
        if self.frame_type == "B" and self.q_ref2 is None:
            raise SchemaError("B-frame needs q_ref2", line)
        if self.frame_type == "I" and (self.q_ref1 is not None or self.q_ref2 is not None):
            raise SchemaError("I-frame must not carry reference QPs", line)
        if self.frame_type == "P" and self.q_ref2 is not None:
            raise SchemaError("P-frame must not carry q_ref2", line)
        for name in ("q", "q_ref1", "q_ref2"):
            val = getattr(self, name)
            if val is not None and not QP_RANGE[0] <= val <= QP_RANGE[1]:
                raise InvariantViolation(f"{name}={val} outside {QP_RANGE}", line)
        if not (math.isfinite(self.bits) and self.bits > 0):
            raise InvariantViolation(f"bits must be > 0, got {self.bits}", line)
        if self.frame_index < 0:
            raise InvariantViolation("frame_index must be >= 0", line)

    @property
    def encode_key(self) -> tuple:
        return (self.sequence_id, self.base_qp)


# ---------------------------------------------------------------- log I/O

def _opt_int(text: str, name: str, line: int) -> Optional[int]:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{name}: not an integer: {text!r}", line) from None


def ingest_log(path) -> list[FrameCodingRecord]:
    """Parse and validate an encoder log CSV.

    Required header: ``sequence_id,frame_index,frame_type,q,q_ref1,q_ref2,bits``.
    Optional columns ``base_qp`` (encode tag) and ``ref1``/``ref2`` (reference
    frame indices); when the reference indices are present the reference QPs
    are cross-checked against the referenced frames of the same encode.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty log", 1)
        missing = [c for c in LOG_COLUMNS if c not in header]
        unknown = [c for c in header if c not in LOG_COLUMNS + OPTIONAL_LOG_COLUMNS]
        if missing or unknown:
            raise SchemaError(
                f"{path}: bad header (missing {missing}, unknown {unknown})", 1
            )
        col = {name: i for i, name in enumerate(header)}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            get = lambda name: row[col[name]].strip() if name in col else ""  # noqa: E731
            try:
                frame_index = int(get("frame_index"))
                q = int(get("q"))
                bits = float(get("bits"))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            refs = tuple(r for r in (_opt_int(get("ref1"), "ref1", lineno),
                                     _opt_int(get("ref2"), "ref2", lineno))
                         if r is not None)
            rec = FrameCodingRecord(
                sequence_id=get("sequence_id"),
                frame_index=frame_index,
                frame_type=get("frame_type"),
                q=q,
                q_ref1=_opt_int(get("q_ref1"), "q_ref1", lineno),
                q_ref2=_opt_int(get("q_ref2"), "q_ref2", lineno),
                bits=bits,
                base_qp=_opt_int(get("base_qp"), "base_qp", lineno),
                refs=refs,
            )
            if not rec.sequence_id:
                raise SchemaError("empty sequence_id", lineno)
            rec.validate(lineno)
            records.append((lineno, rec))
    if "ref1" in col:
        _cross_check_refs(records)
    return [rec for _, rec in records]


def _cross_check_refs(numbered) -> None:
    qp = {}
    for _, rec in numbered:
        qp[rec.encode_key + (rec.frame_index,)] = rec.q
    for lineno, rec in numbered:
        for ref, q_ref in zip(rec.refs, (rec.q_ref1, rec.q_ref2)):
            actual = qp.get(rec.encode_key + (ref,))
            if actual is not None and actual != q_ref:
                raise InvariantViolation(
                    f"reference QP {q_ref} disagrees with frame {ref} coded at QP {actual}",
                    lineno,
                )


def write_log(records: Iterable[FrameCodingRecord], path) -> None:
    opt = lambda v: "" if v is None else str(v)  # noqa: E731
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS + OPTIONAL_LOG_COLUMNS)
        for r in records:
            refs = list(r.refs) + [None] * (2 - len(r.refs))
            writer.writerow([r.sequence_id, r.frame_index, r.frame_type, r.q,
                             opt(r.q_ref1), opt(r.q_ref2), repr(float(r.bits)),
                             opt(r.base_qp), opt(refs[0]), opt(refs[1])])


# ---------------------------------------------------------- feature matrix

def reference_gradients(features, role) -> list[Optional[float]]:
    """Temporal gradient for each reference of ``role``.

    A past reference at distance ``g`` reads ``h_by_gap[g]`` of the frame
    itself; a future reference reads it from the reference frame, which is
    the same quantity because the gradient is symmetric.
    """
    out = []
    k = role.frame_index
    for ref in role.refs:
        gap = abs(k - ref)
        owner = features[max(k, ref)]
        out.append(owner.h_by_gap.get(gap))
    return out


def feature_row(features, role, q, q_refs, use_chroma: bool = True) -> list[float]:
    """Model inputs of one frame coded at ``q`` with reference QPs ``q_refs``."""
    h = reference_gradients(features, role)
    if any(v is None for v in h):
        raise MissingFeature(f"frame {role.frame_index}: temporal gradient unavailable")
    f = features[role.frame_index]
    t = role.frame_type
    if t == "I":
        row = [f.E_Y, f.L_Y, f.E_U, f.L_U, f.E_V, f.L_V, q]
    elif t == "P":
        row = [f.E_Y, h[0], f.L_Y, f.E_U, f.L_U, f.E_V, f.L_V, q, q_refs[0]]
    else:
        row = [f.E_Y, h[0], h[1], f.L_Y, f.E_U, f.L_U, f.E_V, f.L_V,
               q, q_refs[0], q_refs[1]]
    if use_chroma:
        return row
    return [v for v, n in zip(row, FEATURE_NAMES[t]) if n not in _CHROMA]


def build_matrix(features, roles, truth, frame_type: str,
                 use_chroma: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Rows for one frame type of one sequence, columns per ``feature_names``."""
    if frame_type not in FRAME_TYPES:
        raise SchemaError(f"unknown frame_type {frame_type!r}")
    if len(features) != len(roles):
        raise Misalignment(
            f"{len(features)} complexity records but {len(roles)} frame roles"
        )
    for k, (f, r) in enumerate(zip(features, roles)):
        if f.frame_index != k or r.frame_index != k:
            raise Misalignment(f"records are not in frame order at position {k}")

    rows, labels, excluded = [], [], 0
    for rec in truth:
        if rec.frame_type != frame_type:
            continue
        k = rec.frame_index
        if not 0 <= k < len(roles):
            raise Misalignment(f"log frame {k} has no complexity record")
        role = roles[k]
        if role.frame_type != rec.frame_type:
            raise Misalignment(
                f"frame {k}: log says {rec.frame_type}, GOP structure says {role.frame_type}"
            )
        h = reference_gradients(features, role)
        if any(v is None for v in h):
            gaps = [abs(k - r) for r in role.refs]
            if any(max(k, r) < g for r, g in zip(role.refs, gaps)):
                excluded += 1
                continue
            raise MissingFeature(
                f"frame {k}: temporal gradient at gap(s) {gaps} was not analyzed"
            )
        q_refs = [rec.q_ref1, rec.q_ref2][:len(role.refs)]
        rows.append(feature_row(features, role, rec.q, q_refs, use_chroma))
        labels.append(rec.bits)
    if excluded:
        log.info("excluded %d %s-frame rows without temporal features", excluded, frame_type)
    width = len(feature_names(frame_type, use_chroma))
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), width)
    return X, np.asarray(labels, dtype=np.float64)


@dataclass
class SequenceData:
    """Everything known about one source sequence."""

    sequence_id: str
    features: list
    roles: list
    truth: list = field(default_factory=list)


def stack_corpus(corpus: Sequence[SequenceData], frame_type: str,
                 use_chroma: bool = True):
    """Concatenate ``build_matrix`` over sequences; also returns row groups."""
    Xs, ys, groups = [], [], []
    width = len(feature_names(frame_type, use_chroma))
    for seq in corpus:
        X, y = build_matrix(seq.features, seq.roles, seq.truth, frame_type, use_chroma)
        Xs.append(X)
        ys.append(y)
        groups.extend([seq.sequence_id] * len(y))
    if not Xs:
        return np.zeros((0, width)), np.zeros(0), np.array([], dtype=object)
    return np.vstack(Xs), np.concatenate(ys), np.asarray(groups, dtype=object)


def write_matrix_csv(X, y, frame_type: str, use_chroma: bool, path) -> None:
    names = feature_names(frame_type, use_chroma)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(names) + ["bits"])
        for row, label in zip(np.asarray(X), np.asarray(y)):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(label))])


# ------------------------------------------------------- synthetic encoder

@dataclass(frozen=True)
class OracleCoeffs:
    alpha: float
    beta_E: float
    beta_C: float
    beta_h: float
    gamma: float


DEFAULT_ORACLE_COEFFS = {
    "I": OracleCoeffs(alpha=120_000.0, beta_E=0.12, beta_C=0.08, beta_h=0.0, gamma=6.0),
    "P": OracleCoeffs(alpha=40_000.0, beta_E=0.05, beta_C=0.08, beta_h=0.15, gamma=6.0),
    "B": OracleCoeffs(alpha=12_000.0, beta_E=0.04, beta_C=0.08, beta_h=0.15, gamma=6.0),
}


@dataclass(frozen=True)
class SyntheticOracleParams:
    """Parametric stand-in for a real encoder.

    ``bits = alpha * (1 + beta_E*E_Y + beta_C*(E_U + E_V) + beta_h*(h_ref1 + h_ref2))
    * 2**(-(q - 24) / gamma) * (1 + noise)`` with ``noise ~ U(-epsilon, epsilon)``.
    """

    coeffs: dict = field(default_factory=lambda: dict(DEFAULT_ORACLE_COEFFS))
    epsilon: float = 0.0
    seed: int = 0
    q_pivot: int = 24

    def __post_init__(self):
        for t in FRAME_TYPES:
            c = self.coeffs.get(t)
            if c is None:
                raise InvalidConfig(f"missing oracle coefficients for {t}-frames")
            if c.alpha <= 0 or c.gamma <= 0:
                raise InvalidConfig(f"{t}: alpha and gamma must be > 0")
        if not 0 <= self.epsilon < 1:
            raise InvalidConfig(f"epsilon must be in [0, 1), got {self.epsilon}")

    def to_dict(self) -> dict:
        return {
            "coeffs": {t: vars(c) for t, c in self.coeffs.items()},
            "epsilon": self.epsilon, "seed": self.seed, "q_pivot": self.q_pivot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticOracleParams":
        coeffs = dict(DEFAULT_ORACLE_COEFFS)
        for t, c in d.get("coeffs", {}).items():
            coeffs[t] = OracleCoeffs(**c)
        return cls(coeffs=coeffs, epsilon=d.get("epsilon", 0.0),
                   seed=d.get("seed", 0), q_pivot=d.get("q_pivot", 24))


def _noise(params: SyntheticOracleParams, sequence_id: str, frame_index: int,
           q: int) -> float:
    if params.epsilon == 0:
        return 0.0
    salt = zlib.crc32(sequence_id.encode())
    rng = np.random.default_rng([params.seed, salt, frame_index, int(q)])
    return float(rng.uniform(-params.epsilon, params.epsilon))


def oracle_bits(params: SyntheticOracleParams, feature, h_refs, frame_type: str,
                q: float, sequence_id: str = "", frame_index: int = 0) -> float:
    c = params.coeffs[frame_type]
    content = 1.0 + c.beta_E * feature.E_Y + c.beta_C * (feature.E_U + feature.E_V)
    content += c.beta_h * sum(h_refs)
    scale = 2.0 ** (-(q - params.q_pivot) / c.gamma)
    noise = _noise(params, sequence_id, frame_index, q)
    return c.alpha * content * scale * (1.0 + noise)


def synth_encode(features, roles, params: SyntheticOracleParams,
                 qp_assignment, sequence_id: str = "synthetic",
                 base_qp: Optional[int] = None) -> list[FrameCodingRecord]:
    """Label every frame with oracle bits at the given per-frame QPs."""
    out = []
    for role in roles:
        k = role.frame_index
        q = int(qp_assignment[k])
        h = reference_gradients(features, role)
        if any(v is None for v in h):
            raise MissingFeature(f"frame {k}: temporal gradient unavailable")
        q_refs = [int(qp_assignment[r]) for r in role.refs] + [None, None]
        bits = oracle_bits(params, features[k], h, role.frame_type, q, sequence_id, k)
        out.append(FrameCodingRecord(sequence_id, k, role.frame_type, q,
                                     q_refs[0], q_refs[1], bits, base_qp, role.refs))
    return out


def sweep_encode(features, roles, params: SyntheticOracleParams,
                 base_qps=DEFAULT_BASE_QPS, level_offsets=DEFAULT_LEVEL_OFFSETS,
                 sequence_id: str = "synthetic") -> list[FrameCodingRecord]:
    """Synthetic encodes of one sequence at each base QP of the sweep."""
    out = []
    for base in base_qps:
        qps = cascade_qps(roles, base, level_offsets)
        out.extend(synth_encode(features, roles, params, qps, sequence_id, base))
    return out


# --------------------------------------------------------------- CV folds

def kfold_split(sequence_ids, k: int = 5, seed: int = 0):
    """Sequence-level k-fold partitions as ``[(train_ids, test_ids), ...]``."""
    ids = sorted(set(sequence_ids))
    if k < 2:
        raise TooFewSequences(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise TooFewSequences(f"{len(ids)} sequences cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    folds = [list(chunk) for chunk in np.array_split(np.array(shuffled, dtype=object), k)]
    out = []
    for i, test in enumerate(folds):
        train = [s for j, f in enumerate(folds) if j != i for s in f]
        out.append((sorted(train), sorted(test)))
    return out


# ------------------------------------------------------------ corpus I/O

def load_corpus(features_dir, log_path, gop_cfg=None) -> list[SequenceData]:
    """Pair ``<features_dir>/<sequence_id>.csv`` files with an encoder log."""
    records = ingest_log(log_path)
    by_seq: dict[str, list] = {}
    for r in records:
        by_seq.setdefault(r.sequence_id, []).append(r)
    corpus = []
    for path in sorted(Path(features_dir).glob("*.csv")):
        features = read_features_csv(path)
        roles = classify_frames(len(features), gop_cfg)
        corpus.append(SequenceData(path.stem, features, roles, by_seq.pop(path.stem, [])))
    if by_seq:
        raise Misalignment(
            f"log sequences without feature files: {sorted(by_seq)[:5]}"
        )
    return corpus
