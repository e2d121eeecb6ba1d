"""Brute-force reference implementations used as independent test oracles.

Everything here is written with plain Python loops on purpose: these must
stay independent of the library's vectorized code paths.
"""

import math


def k_occurrence_brute(rankings, k):
    n_gallery = len(rankings[0])
    counts = [0] * n_gallery
    for row in rankings:
        for j in row[:k]:
            counts[j] += 1
    return counts


def recall_brute(rankings, ground_truth, k):
    hits = 0
    for row, truth in zip(rankings, ground_truth):
        if truth in list(row[:k]):
            hits += 1
    return 100.0 * hits / len(rankings)


def cross_covariance_brute(x, y):
    n = len(x)
    d = len(x[0])
    mx = [sum(row[a] for row in x) / n for a in range(d)]
    my = [sum(row[b] for row in y) / n for b in range(d)]
    cov = [[0.0] * d for _ in range(d)]
    for a in range(d):
        for b in range(d):
            s = 0.0
            for i in range(n):
                s += (x[i][a] - mx[a]) * (y[i][b] - my[b])
            cov[a][b] = s / (n - 1)
    return cov


def argmax_brute(row):
    best, best_val = 0, row[0]
    for j, v in enumerate(row):
        if v > best_val:
            best, best_val = j, v
    return best


def softmax_brute(row, scale):
    exps = [math.exp(scale * v) for v in row]
    total = sum(exps)
    return [e / total for e in exps]


def entropy_brute(p):
    return -sum(v * math.log(v) for v in p if v > 0.0)


def skewness_brute(x):
    n = len(x)
    mu = sum(x) / n
    m2 = sum((v - mu) ** 2 for v in x) / n
    if m2 <= 1e-24:
        return 0.0
    m3 = sum((v - mu) ** 3 for v in x) / n
    return m3 / m2**1.5


def atkinson_brute(x, eps):
    n = len(x)
    mu = sum(x) / n
    ede = (sum(v ** (1 - eps) for v in x) / n) ** (1 / (1 - eps))
    return 1 - ede / mu


def robin_hood_brute(x):
    mu = sum(x) / len(x)
    return 0.5 * sum(abs(v - mu) for v in x) / sum(x)


def antihub_brute(x):
    return sum(1 for v in x if v == 0) / len(x)


def hub_occurrence_brute(x, k, factor=2.0):
    total = sum(x)
    return sum(v for v in x if v > factor * k) / total
