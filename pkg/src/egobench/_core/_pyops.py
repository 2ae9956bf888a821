"""Pure NumPy backend for the matching kernels.

Mirrors ``_coreops.pyx`` operation for operation. The arithmetic (operand
order, clipping, the union>0 guard) must stay in lockstep with the Cython
version so both backends produce bit-identical doubles.
"""

from __future__ import annotations

import numpy as np


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two box sets in (x, y, w, h) layout.

    Boxes with non-positive area have IoU 0 against everything.
    Returns an ``len(a) x len(b)`` float64 matrix.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0], a[:, 1]
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]

    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(ax1[:, None], bx1[None, :])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(ay1[:, None], by1[None, :])
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih

    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter

    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def greedy_match_indices(ious: np.ndarray, iou_thresh: float) -> np.ndarray:
    """Greedy row-order matching on a precomputed IoU matrix.

    Rows are predictions in descending-score order; each row takes the
    unused column of highest IoU >= iou_thresh (ties: lowest column
    index). Returns an int64 vector of column indices, -1 for unmatched.
    """
    ious = np.asarray(ious, dtype=np.float64)
    n, m = ious.shape
    out = np.full(n, -1, dtype=np.int64)
    used = np.zeros(m, dtype=bool)
    for i in range(n):
        best = -1
        best_iou = 0.0
        row = ious[i]
        for j in range(m):
            if used[j]:
                continue
            v = row[j]
            if v >= iou_thresh and (best < 0 or v > best_iou):
                best = j
                best_iou = v
        if best >= 0:
            used[best] = True
            out[i] = best
    return out
