"""Numba-compiled implementations of the hot kernels.

Row-major loops, one pass per row where the math allows it. fastmath is
left off: the attention tests compare against oracles at 1e-10 and the
passthrough rows must stay bit-exact.
"""

import math

import numpy as np
from numba import njit

# exp(x) = 2**k * exp(r), k = round(x / ln 2), |r| <= ln2 / 2. ln 2 is split
# so k * LN2_HI is exact. Degree 13 Taylor on that interval is below 1 ulp.
LOG2E = 1.4426950408889634
LN2_HI = 0.6931471803691238
LN2_LO = 1.9082149292705877e-10
# adding 2**52 + 1023 puts the biased exponent of 2**k in the low mantissa bits
EXP_MAGIC = 4503599627370496.0 + 1023.0
EXP_FLOOR = -708.0


@njit(cache=True)
def _exp_shifted(dst, src, shift, scale, pow2):
    """dst[j] = exp((src[j] - shift) * scale) for arguments <= 0; returns the sum.

    Branch-free, so LLVM vectorizes it. numba's math.exp is a scalar libm
    call. Arguments below EXP_FLOOR are clamped, which gives ~1e-308
    instead of 0; harmless next to the row max term, which is exactly 1.
    """
    c = src.shape[0]
    bits = pow2.view(np.int64)
    for j in range(c):
        x = max((src[j] - shift) * scale, EXP_FLOOR)
        kf = math.floor(x * LOG2E + 0.5)
        r = (x - kf * LN2_HI) - kf * LN2_LO
        p = 1.0 / 6227020800.0
        p = p * r + 1.0 / 479001600.0
        p = p * r + 1.0 / 39916800.0
        p = p * r + 1.0 / 3628800.0
        p = p * r + 1.0 / 362880.0
        p = p * r + 1.0 / 40320.0
        p = p * r + 1.0 / 5040.0
        p = p * r + 1.0 / 720.0
        p = p * r + 1.0 / 120.0
        p = p * r + 1.0 / 24.0
        p = p * r + 1.0 / 6.0
        p = p * r + 0.5
        p = p * r + 1.0
        dst[j] = p * r + 1.0
        pow2[j] = kf + EXP_MAGIC
    for j in range(c):
        bits[j] = bits[j] << 52
    total = 0.0
    for j in range(c):
        e = dst[j] * pow2[j]
        dst[j] = e
        total += e
    return total


@njit(cache=True)
def _row_max(row):
    mx = row[0]
    for j in range(1, row.shape[0]):
        if row[j] > mx:
            mx = row[j]
    return mx


@njit(cache=True)
def softmax_rows_(m, scale):
    n, c = m.shape
    work = np.empty(c)
    pow2 = np.empty(c)
    for i in range(n):
        row = m[i]
        # a separate destination keeps the exp loop free of aliasing, so it vectorizes
        inv = 1.0 / _exp_shifted(work, row, _row_max(row), scale, pow2)
        for j in range(c):
            row[j] = work[j] * inv


@njit(cache=True)
def lse_rows(m):
    n, c = m.shape
    out = np.empty(n)
    work = np.empty(c)
    pow2 = np.empty(c)
    for i in range(n):
        mx = _row_max(m[i])
        out[i] = mx + math.log(_exp_shifted(work, m[i], mx, 1.0, pow2))
    return out


@njit(cache=True)
def mean_rows(m):
    # same accumulation order as max_minus_mean_rows, so the two means agree bitwise
    n, c = m.shape
    out = np.empty(n)
    for i in range(n):
        total = 0.0
        for j in range(c):
            total += m[i, j]
        out[i] = total / c
    return out


@njit(cache=True)
def max_minus_mean_rows(m):
    n, c = m.shape
    out = np.empty(n)
    for i in range(n):
        mx = m[i, 0]
        total = 0.0
        for j in range(c):
            s = m[i, j]
            total += s
            if s > mx:
                mx = s
        out[i] = mx - total / c
    return out


@njit(cache=True)
def topk_sorted(scores, k):
    order = np.argsort(-scores, kind="mergesort")[:k]
    return np.sort(order).astype(np.int64)


@njit(cache=True)
def scatter_rows_(out, idx, rows):
    c = out.shape[1]
    for r in range(idx.shape[0]):
        i = idx[r]
        for j in range(c):
            out[i, j] = rows[r, j]


@njit(cache=True)
def depthwise_conv_(out, x, kernel, bias):
    n, c = x.shape
    width = kernel.shape[0]
    pad = width // 2
    for i in range(n):
        for ch in range(c):
            acc = bias[ch]
            for t in range(width):
                src = i + t - pad
                if 0 <= src < n:
                    acc += x[src, ch] * kernel[t, ch]
            out[i, ch] = acc
