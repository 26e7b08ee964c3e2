"""Pure-Python/numpy versions of the compiled kernels.

The cosine scan walks the dimension axis one column at a time so every row
is accumulated in the same left-to-right order as the compiled kernel; the
two backends therefore agree bit for bit.
"""

from __future__ import annotations

import numpy as np


def cosine_distances(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    n, dim = matrix.shape
    if query.shape[0] != dim:
        raise ValueError("query dimension does not match matrix")
    q = query.astype(np.float64)
    qsq = 0.0
    for j in range(dim):
        qsq = qsq + float(q[j]) * float(q[j])
    qnorm = np.sqrt(qsq)

    dot = np.zeros(n, dtype=np.float64)
    rsq = np.zeros(n, dtype=np.float64)
    for j in range(dim):
        col = matrix[:, j].astype(np.float64)
        dot = dot + col * q[j]
        rsq = rsq + col * col

    out = np.ones(n, dtype=np.float64)
    nz = rsq != 0.0
    sim = dot[nz] / (qnorm * np.sqrt(rsq[nz]))
    out[nz] = 1.0 - np.clip(sim, -1.0, 1.0)
    return out


def word_edit_distance(a, b) -> int:
    m, n = len(a), len(b)
    if m == 0:
        return n
    if n == 0:
        return m
    prev = list(range(n + 1))
    for i in range(1, m + 1):
        cur = [i] + [0] * n
        ai = a[i - 1]
        for j in range(1, n + 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if ai == b[j - 1] else 1),
            )
        prev = cur
    return prev[n]
