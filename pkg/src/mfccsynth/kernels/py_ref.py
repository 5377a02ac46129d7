"""Pure Python implementations of the sequential filter kernels.

These mirror _core.pyx operation for operation so both backends produce
bit-identical float64 output; keep loop order in sync when editing either.
Inputs are assumed validated by the wrappers in kernels/__init__.py.
"""
from __future__ import annotations

import numpy as np


def levinson(r, order, condition=1e-6):
    """Solve the symmetric Toeplitz normal equations by recursion.

    Returns (a, err) with a[0] = 1 and err the final prediction error.
    The zero-lag term is inflated by ``condition`` before the recursion
    so nearly singular sequences stay solvable.
    """
    rr = [float(v) for v in np.asarray(r)[: order + 1]]
    a = [0.0] * (order + 1)
    a[0] = 1.0
    e = rr[0] * (1.0 + condition)
    for i in range(1, order + 1):
        acc = rr[i]
        for j in range(1, i):
            acc += a[j] * rr[i - j]
        lam = -acc / e
        prev = a[1:i]
        for j in range(1, i):
            a[j] = prev[j - 1] + lam * prev[i - 1 - j]
        a[i] = lam
        e *= 1.0 - lam * lam
    return np.array(a, dtype=np.float64), e


def levinson_batch(rows, order, condition=1e-6):
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    coeffs = np.empty((n, order + 1), dtype=np.float64)
    errors = np.empty(n, dtype=np.float64)
    for t in range(n):
        coeffs[t], errors[t] = levinson(rows[t], order, condition)
    return coeffs, errors


def inverse_filter(x, coeffs, frame_of_sample):
    """Time-varying FIR whitening: e[n] = sum_k a[t_n, k] x[n-k].

    Accumulates lag by lag so each output element sums its terms in the
    same order as the compiled per-sample loop.
    """
    x = np.asarray(x, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    n = x.shape[0]
    p = coeffs.shape[1] - 1
    out = np.zeros(n, dtype=np.float64)
    for k in range(p + 1):
        if k >= n:
            break
        out[k:] += coeffs[frame_of_sample[k:], k] * x[: n - k]
    return out


def synthesis_filter(exc, coeffs, frame_of_sample):
    """Time-varying all-pole: y[n] = exc[n] - sum_{k>=1} a[t_n, k] y[n-k]."""
    exc_l = [float(v) for v in np.asarray(exc)]
    rows = [[float(v) for v in row] for row in np.asarray(coeffs)]
    fos = [int(v) for v in np.asarray(frame_of_sample)]
    n = len(exc_l)
    p = len(rows[0]) - 1 if rows else 0
    y = [0.0] * n
    for i in range(n):
        row = rows[fos[i]]
        acc = exc_l[i]
        kmax = p if p < i else i
        for k in range(1, kmax + 1):
            acc -= row[k] * y[i - k]
        y[i] = acc
    return np.array(y, dtype=np.float64)
