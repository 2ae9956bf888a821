"""Box algebra shared by consensus, the detection-head kernels, and eval.

Convention: boxes are (x, y, w, h) in pixels, top-left origin, half-open
semantics. Degenerate (zero-area) boxes have IoU 0 against everything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from egobench import _core


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        # canonical float storage so serialization is stable regardless of
        # whether callers passed ints
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "h", float(self.h))

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    """Pack boxes into an N x 4 float64 array for the matching backend."""
    out = np.empty((len(boxes), 4), dtype=np.float64)
    for i, b in enumerate(boxes):
        out[i, 0] = b.x
        out[i, 1] = b.y
        out[i, 2] = b.w
        out[i, 3] = b.h
    return out


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the union has zero area."""
    ax2 = a.x + a.w
    ay2 = a.y + a.h
    bx2 = b.x + b.w
    by2 = b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw < 0.0:
        iw = 0.0
    if ih < 0.0:
        ih = 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    if union > 0.0:
        return inter / union
    return 0.0


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: iou - (hull - union) / hull, in [-1, 1]."""
    ax2 = a.x + a.w
    ay2 = a.y + a.h
    bx2 = b.x + b.w
    by2 = b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw < 0.0:
        iw = 0.0
    if ih < 0.0:
        ih = 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    base = inter / union if union > 0.0 else 0.0
    hull_w = max(ax2, bx2) - min(a.x, b.x)
    hull_h = max(ay2, by2) - min(a.y, b.y)
    hull = hull_w * hull_h
    if hull <= 0.0:
        return base
    return base - (hull - union) / hull


def greedy_match(
    predictions: Sequence[Box], gts: Sequence[Box], iou_thresh: float
) -> list[Optional[int]]:
    """Score-ordered greedy assignment of predictions to ground truths.

    ``predictions`` must already be sorted by descending score (ties by
    ascending index). Each prediction takes the unmatched ground truth of
    highest IoU >= iou_thresh (ties: lowest gt index); each gt is used at
    most once. Returns one gt index or None per prediction.
    """
    if not predictions or not gts:
        return [None] * len(predictions)
    ious = _core.iou_matrix(boxes_to_array(predictions), boxes_to_array(gts))
    idx = _core.greedy_match_indices(ious, iou_thresh)
    return [int(j) if j >= 0 else None for j in idx]
