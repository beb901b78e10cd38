"""Small shared helpers."""

from __future__ import annotations

import numpy as np


def pairwise_sum(values: np.ndarray) -> float:
    """Fixed-shape binary-tree summation.

    The reduction order depends only on the array length, so results are
    bitwise reproducible regardless of how the elements were produced.
    """
    a = np.asarray(values, dtype=float).ravel()
    n = a.size
    if n == 0:
        return 0.0
    # Pad to a power of two with exact zeros; the tree shape is then fixed.
    size = 1 << (n - 1).bit_length()
    if size != n:
        a = np.concatenate([a, np.zeros(size - n)])
    else:
        a = a.copy()
    while a.size > 1:
        a = a[0::2] + a[1::2]
    return float(a[0])
