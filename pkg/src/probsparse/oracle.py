"""Brute-force reference implementations for cross-checking the library.

Plain Python loops over ``math``; nothing here calls into ``kernels`` or
``numeric`` so a bug in a shared reduction cannot validate itself.
O(L^2 d) by design; keep instances small.
"""

import math


def _rows(m):
    return [[float(x) for x in row] for row in m]


def _dot(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


def _distribution(q_i, keys):
    d = len(q_i)
    scores = [_dot(q_i, k_j) / math.sqrt(d) for k_j in keys]
    top = scores[0]
    for s in scores[1:]:
        if s > top:
            top = s
    weights = [math.exp(s - top) for s in scores]
    norm = math.fsum(weights)
    return [w / norm for w in weights]


def oracle_attention(q, k, v):
    """Per-query explicit softmax over keys, then an explicit weighted sum."""
    q, k, v = _rows(q), _rows(k), _rows(v)
    if any(len(row) != len(k[0]) for row in q + k):
        raise ValueError("query and key dimensions differ")
    if len(k) != len(v):
        raise ValueError("key and value counts differ")
    out = []
    for q_i in q:
        p = _distribution(q_i, k)
        row = []
        for c in range(len(v[0])):
            row.append(math.fsum(p[j] * v[j][c] for j in range(len(v))))
        out.append(row)
    return out


def oracle_kl(q_i, k):
    """``sum_j p_j ln(p_j L)`` over the explicit attention distribution."""
    q_i = [float(x) for x in q_i]
    p = _distribution(q_i, _rows(k))
    n = len(p)
    return math.fsum(pj * math.log(pj * n) for pj in p if pj > 0.0)


def oracle_kl_reverse(q_i, k):
    """``sum_j (1/L) ln((1/L) / p_j)``: divergence of uniform from the attention distribution.

    This is the direction the log-sum-exp-minus-mean measure equals after
    subtracting ``ln L``; ``oracle_kl`` is the other direction.
    """
    q_i = [float(x) for x in q_i]
    keys = _rows(k)
    d, n = len(q_i), len(keys)
    scores = [_dot(q_i, k_j) / math.sqrt(d) for k_j in keys]
    top = max(scores)
    log_norm = math.log(math.fsum(math.exp(s - top) for s in scores))
    # log p_j straight from the scores, so tiny p_j cannot underflow to log(0)
    log_p = [(s - top) - log_norm for s in scores]
    return math.fsum((-math.log(n) - lp) / n for lp in log_p)


def oracle_kl_from_probs(p):
    n = len(p)
    return math.fsum(pj * math.log(pj * n) for pj in p if pj > 0.0)


def oracle_topk(scores, k):
    """Stable descending sort, lower index first on ties, first ``k``, ascending."""
    scores = [float(s) for s in scores]
    if not 1 <= k <= len(scores):
        raise ValueError(f"k={k} out of range for {len(scores)} scores")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(order[:k])


def oracle_max_minus_mean(q_i, keys):
    d = len(q_i)
    scores = [_dot(q_i, k_j) / math.sqrt(d) for k_j in _rows(keys)]
    top = scores[0]
    for s in scores:
        top = s if s > top else top
    return top - math.fsum(scores) / len(scores)


def oracle_matmul(a, b):
    a, b = _rows(a), _rows(b)
    return [[math.fsum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def oracle_depthwise_conv(x, kernel, bias):
    """Sliding window with zeros outside ``[0, L)``; ``kernel`` is ``width x channels``."""
    x, kernel = _rows(x), _rows(kernel)
    n, c, width = len(x), len(x[0]), len(kernel)
    pad = width // 2
    out = []
    for i in range(n):
        row = []
        for ch in range(c):
            acc = float(bias[ch])
            for t in range(width):
                src = i + t - pad
                if 0 <= src < n:
                    acc += x[src][ch] * kernel[t][ch]
            row.append(acc)
        out.append(row)
    return out


def oracle_layer_norm(row, scale, shift, eps=1e-5):
    n = len(row)
    mu = math.fsum(row) / n
    var = math.fsum((x - mu) ** 2 for x in row) / n
    return [(x - mu) / math.sqrt(var + eps) * scale[i] + shift[i] for i, x in enumerate(row)]


def oracle_ffn(x, w):
    """Explicit two-layer forward with pre-norm and swish, row by row."""
    out = []
    w1, w2 = _rows(w.w1), _rows(w.w2)
    for row in _rows(x):
        h_in = oracle_layer_norm(row, w.ln_scale, w.ln_shift)
        hidden = []
        for j in range(len(w1[0])):
            z = math.fsum(h_in[t] * w1[t][j] for t in range(len(h_in))) + w.b1[j]
            hidden.append(z / (1.0 + math.exp(-z)))
        out.append([
            math.fsum(hidden[t] * w2[t][j] for t in range(len(hidden))) + w.b2[j]
            for j in range(len(w2[0]))
        ])
    return out


def oracle_conv_module(x, w):
    """Conv module one stage at a time with explicit loops."""
    pw1, pw2 = _rows(w.pw1), _rows(w.pw2)
    d = len(pw2)
    glu = []
    for row in _rows(x):
        h_in = oracle_layer_norm(row, w.ln_scale, w.ln_shift)
        h = [math.fsum(h_in[t] * pw1[t][j] for t in range(d)) + w.pw1_b[j] for j in range(2 * d)]
        glu.append([h[j] / (1.0 + math.exp(-h[d + j])) for j in range(d)])
    conv = oracle_depthwise_conv(glu, w.dw, w.dw_b)
    out = []
    for row in conv:
        act = []
        for ch, z in enumerate(row):
            z = z * w.bn_scale[ch] + w.bn_shift[ch]
            act.append(z / (1.0 + math.exp(-z)))
        out.append([math.fsum(act[t] * pw2[t][j] for t in range(d)) + w.pw2_b[j] for j in range(d)])
    return out
