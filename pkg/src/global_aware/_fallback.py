"""NumPy implementations of the hot kernels.

Used when the compiled ``_speedups`` extension is unavailable or when
``GLOBAL_AWARE_PURE_PYTHON`` is set. Signatures match the Cython module.
"""
import numpy as np


def min_sum(local, g):
    """Return ``(sum_i min(local_i, g_i), sum_i local_i)``."""
    local = np.asarray(local, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if local.shape != g.shape:
        raise ValueError(f"length mismatch: {local.shape[0]} vs {g.shape[0]}")
    return float(np.minimum(local, g).sum()), float(local.sum())


def lcs_length(a, b):
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rank_candidates(scores):
    """Flat indices of a (beams, vocab) score matrix, best first.

    Ties keep row-major order, i.e. lower parent index then lower token id.
    """
    flat = np.asarray(scores, dtype=np.float64).ravel()
    return np.argsort(-flat, kind="stable").astype(np.int64)
