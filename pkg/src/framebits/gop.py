"""Hierarchical random-access GOP structure.

Frame 0 and every ``intra_period``-th frame are intra coded; every other
``gop_size``-th frame is a P anchor referencing the previous anchor. The
frames between two anchors are B frames placed by recursive midpoint
splitting, each referencing the two ends of the span it splits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

from .errors import InvalidConfig

VALID_GOP_SIZES = (2, 4, 8, 16, 32)
DEFAULT_LEVEL_OFFSETS = (0, 1, 2, 3, 4, 5)
QP_MIN, QP_MAX = 0, 63


@dataclass(frozen=True)
class GopConfig:
    gop_size: int = 32
    intra_period: int = 64

    def __post_init__(self):
        if self.gop_size not in VALID_GOP_SIZES:
            raise InvalidConfig(
                f"gop_size must be one of {VALID_GOP_SIZES}, got {self.gop_size}"
            )
        if self.intra_period <= 0 or self.intra_period % self.gop_size:
            raise InvalidConfig(
                f"intra_period ({self.intra_period}) must be a positive "
                f"multiple of gop_size ({self.gop_size})"
            )


class FrameRole(NamedTuple):
    frame_index: int
    frame_type: str
    refs: tuple[int, ...]
    level: int

    @property
    def ref_distances(self) -> tuple[int, ...]:
        return tuple(abs(self.frame_index - r) for r in self.refs)


def _split(a: int, b: int, level: int, out: dict) -> None:
    if b - a < 2:
        return
    m = (a + b) // 2
    out[m] = FrameRole(m, "B", (a, b), level)
    _split(a, m, level + 1, out)
    _split(m, b, level + 1, out)


def _anchor(k: int, ref: int, cfg: GopConfig) -> FrameRole:
    if k % cfg.intra_period == 0:
        return FrameRole(k, "I", (), 0)
    return FrameRole(k, "P", (ref,), 0)


def classify_frames(frame_count: int, cfg: GopConfig | None = None) -> list[FrameRole]:
    """Role of every frame in display order.

    A tail shorter than one GOP is covered by successively smaller
    power-of-two hierarchies, so every reference distance stays a power of
    two no larger than ``gop_size``.
    """
    cfg = cfg or GopConfig()
    if frame_count < 1:
        raise InvalidConfig(f"frame_count must be >= 1, got {frame_count}")
    last = frame_count - 1
    roles = {0: FrameRole(0, "I", (), 0)}
    a = 0
    while a < last:
        span = cfg.gop_size
        while a + span > last:
            span //= 2
        b = a + span
        roles[b] = _anchor(b, a, cfg)
        _split(a, b, 1, roles)
        a = b
    return [roles[k] for k in range(frame_count)]


def _preorder(a: int, b: int, out: list) -> None:
    if b - a < 2:
        return
    m = (a + b) // 2
    out.append(m)
    _preorder(a, m, out)
    _preorder(m, b, out)


def decode_order(roles) -> list[int]:
    """Coding order: each anchor, then the B frames of the span it closes."""
    anchors = [r.frame_index for r in roles if r.frame_type in ("I", "P")]
    anchors.sort()
    order = [anchors[0]] if anchors else []
    for a, b in zip(anchors, anchors[1:]):
        order.append(b)
        _preorder(a, b, order)
    return order


def gop_groups(roles) -> list[list[int]]:
    """Frames in coding order, grouped into rate-control GOPs.

    A group closes at each anchor after frame 0 and holds the anchor plus the
    B frames it closes; frame 0 joins the first group.
    """
    order = decode_order(roles)
    types = {r.frame_index: r.frame_type for r in roles}
    groups: list[list[int]] = []
    for k in order:
        if types[k] in ("I", "P") and k != 0:
            groups.append([k])
        elif not groups:
            groups.append([k])
        else:
            groups[-1].append(k)
    if len(groups) > 1 and groups[0] == [0]:
        groups[1].insert(0, 0)
        groups.pop(0)
    return groups


def cascade_qps(roles, base_qp: int,
                level_offsets=DEFAULT_LEVEL_OFFSETS) -> dict[int, int]:
    """First-pass QP per frame: base QP plus the offset of its hierarchy level."""
    out = {}
    for r in roles:
        offset = level_offsets[min(r.level, len(level_offsets) - 1)]
        out[r.frame_index] = int(min(QP_MAX, max(QP_MIN, base_qp + offset)))
    return out


def roles_to_csv(roles) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame_index", "type", "level", "ref0", "ref1"])
    for r in roles:
        refs = list(r.refs) + [""] * (2 - len(r.refs))
        writer.writerow([r.frame_index, r.frame_type, r.level, *refs])
    return buf.getvalue()
