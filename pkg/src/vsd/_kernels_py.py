"""Pure numpy fallbacks for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def levenshtein(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    row = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        prev, row[0] = row[0], i
        for j in range(1, len(b) + 1):
            cur = row[j]
            row[j] = min(prev + (a[i - 1] != b[j - 1]), row[j] + 1, row[j - 1] + 1)
            prev = cur
    return int(row[-1])


def pairwise_levenshtein(batch) -> np.ndarray:
    # DP over the (i, j) grid, vectorised across all unordered pairs at once.
    batch = np.asarray(batch, dtype=np.int64)
    n, m = batch.shape
    iu, ju = np.triu_indices(n, k=1)
    a = batch[iu]
    b = batch[ju]
    npairs = iu.size
    row = np.tile(np.arange(m + 1, dtype=np.int64), (npairs, 1))
    for i in range(1, m + 1):
        prev = row[:, 0].copy()
        row[:, 0] = i
        for j in range(1, m + 1):
            cur = row[:, j].copy()
            sub = prev + (a[:, i - 1] != b[:, j - 1])
            row[:, j] = np.minimum(sub, np.minimum(row[:, j], row[:, j - 1]) + 1)
            prev = cur
    out = np.zeros((n, n), dtype=np.int64)
    out[iu, ju] = row[:, m]
    out[ju, iu] = row[:, m]
    return out


def weighted_mismatch(x, y, w) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=float)
    out = np.zeros((x.shape[0], y.shape[0]))
    for p in range(x.shape[1]):
        out += w[p] * (x[:, p][:, None] != y[:, p][None, :])
    return out
