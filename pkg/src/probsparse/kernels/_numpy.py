"""Pure-numpy implementations of the hot kernels.

Every function here has a twin of the same name and signature in
``_numba``; the two are interchangeable and are cross-checked in the tests.
Functions with a trailing underscore write into their first argument.
"""

import numpy as np


def softmax_rows_(m, scale):
    m *= scale
    m -= m.max(axis=1, keepdims=True)
    np.exp(m, out=m)
    m /= m.sum(axis=1, keepdims=True)


def lse_rows(m):
    mx = m.max(axis=1)
    return mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))


def mean_rows(m):
    return m.mean(axis=1)


def max_minus_mean_rows(m):
    return m.max(axis=1) - m.mean(axis=1)


def topk_sorted(scores, k):
    # stable sort on the negated scores keeps the lower index first among ties
    order = np.argsort(-scores, kind="stable")[:k]
    return np.sort(order).astype(np.int64)


def scatter_rows_(out, idx, rows):
    out[idx] = rows


def depthwise_conv_(out, x, kernel, bias):
    n, _ = x.shape
    width = kernel.shape[0]
    pad = width // 2
    xp = np.zeros((n + 2 * pad, x.shape[1]))
    xp[pad:pad + n] = x
    out[:] = bias
    for t in range(width):
        out += xp[t:t + n] * kernel[t]
