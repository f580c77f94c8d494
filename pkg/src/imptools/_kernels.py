"""Compiled inner loops for the search; pure-numpy fallbacks when numba is missing."""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


def _relabelled_entropy_py(digits, counts, lut, m):
    k1 = digits.shape[1]
    code = np.zeros(len(counts), dtype=np.int64)
    for j in range(k1):
        code = code * m + lut[digits[:, j]]
    uniq, inv = np.unique(code, return_inverse=True)
    joint = np.bincount(inv, weights=counts)
    _, ctx_inv = np.unique(uniq // m, return_inverse=True)
    totals = np.bincount(ctx_inv, weights=joint)
    return float(np.dot(totals, np.log2(totals)) - np.dot(joint, np.log2(joint)))


if njit is not None:

    @njit(cache=True)
    def _relabelled_entropy_nb(digits, counts, lut, m):  # pragma: no cover - compiled
        G, k1 = digits.shape
        size = 1
        for _ in range(k1):
            size *= m
        joint = np.zeros(size)
        totals = np.zeros(size // m)
        touched = np.empty(G, dtype=np.int64)
        n_touched = 0
        for g in range(G):
            code = 0
            for j in range(k1):
                code = code * m + lut[digits[g, j]]
            if joint[code] == 0.0:
                touched[n_touched] = code
                n_touched += 1
            joint[code] += counts[g]
        h = 0.0
        for i in range(n_touched):
            c = touched[i]
            v = joint[c]
            h -= v * math.log2(v)
            totals[c // m] += v
        for i in range(n_touched):
            ctx = touched[i] // m
            t = totals[ctx]
            if t > 0.0:
                h += t * math.log2(t)
                totals[ctx] = 0.0
        return h


_DENSE_LIMIT = 1 << 22


def relabelled_entropy(digits: np.ndarray, counts: np.ndarray, lut: np.ndarray, m: int) -> float:
    """Empirical entropy of the label stream induced by mapping symbol grams through ``lut``.

    ``digits`` holds distinct symbol ``(k+1)``-grams (one per row) with
    multiplicities ``counts``; every gram is relabelled symbol by symbol and
    the order-``k`` entropy of the resulting label counts is returned.
    """
    if len(counts) == 0:
        return 0.0
    if njit is not None and m ** digits.shape[1] <= _DENSE_LIMIT:
        h = _relabelled_entropy_nb(digits, counts, lut, m)
    else:
        h = _relabelled_entropy_py(digits, counts, lut, m)
    return max(h, 0.0)
