"""Backend selection for the hot matching kernels.

The compiled Cython module is preferred when present; the pure NumPy
implementation in ``_pyops`` is the fallback. Both backends compute the
same IEEE-754 arithmetic, so results are bit-identical either way (the
test suite asserts this). Set ``EGOBENCH_PURE_PYTHON=1`` to force the
fallback, e.g. for benchmarking.
"""

import os

if os.environ.get("EGOBENCH_PURE_PYTHON") == "1":
    from egobench._core import _pyops as _impl

    BACKEND = "python"
else:
    try:
        from egobench._core import _coreops as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from egobench._core import _pyops as _impl  # type: ignore[no-redef]

        BACKEND = "python"

iou_matrix = _impl.iou_matrix
greedy_match_indices = _impl.greedy_match_indices

__all__ = ["BACKEND", "iou_matrix", "greedy_match_indices"]
