# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the matching kernels.

Keeps the exact arithmetic of ``_pyops`` (operand order, clipping, the
union>0 guard) so both backends produce bit-identical doubles.
"""

import numpy as np


def iou_matrix(a, b):
    """Pairwise IoU between two box sets in (x, y, w, h) layout."""
    a_arr = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b_arr = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] av = a_arr
    cdef double[:, ::1] bv = b_arr
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t m = bv.shape[0]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double ax1, ay1, ax2, ay2, area_a
    cdef double bx1, by1, bx2, by2, area_b
    cdef double iw, ih, inter, union

    for i in range(n):
        ax1 = av[i, 0]
        ay1 = av[i, 1]
        ax2 = av[i, 0] + av[i, 2]
        ay2 = av[i, 1] + av[i, 3]
        area_a = av[i, 2] * av[i, 3]
        for j in range(m):
            bx1 = bv[j, 0]
            by1 = bv[j, 1]
            bx2 = bv[j, 0] + bv[j, 2]
            by2 = bv[j, 1] + bv[j, 3]
            iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
            ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            area_b = bv[j, 2] * bv[j, 3]
            union = area_a + area_b - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out_arr


def greedy_match_indices(ious, double iou_thresh):
    """Greedy row-order matching on a precomputed IoU matrix."""
    iou_arr = np.ascontiguousarray(ious, dtype=np.float64)
    cdef double[:, ::1] iv = iou_arr
    cdef Py_ssize_t n = iv.shape[0]
    cdef Py_ssize_t m = iv.shape[1]
    out_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] out = out_arr
    used_arr = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, best
    cdef double best_iou, v

    for i in range(n):
        best = -1
        best_iou = 0.0
        for j in range(m):
            if used[j]:
                continue
            v = iv[i, j]
            if v >= iou_thresh and (best < 0 or v > best_iou):
                best = j
                best_iou = v
        if best >= 0:
            used[best] = 1
            out[i] = best
    return out_arr
