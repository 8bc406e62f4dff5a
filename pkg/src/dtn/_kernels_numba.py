"""Numba-jitted implementations of the per-batch network kernels.

Same contract as `_kernels_numpy`; matmuls go through np.dot (BLAS),
cheap elementwise work runs in fused loops. The tanh forward is the one
exception: numpy's SIMD ufunc beats a scalar libm loop by about 3x
(see benchmarks/bench_kernels.py), so it stays a ufunc call here. First
call per signature pays JIT compilation; `cache=True` amortizes that
across processes.
"""

import numpy as np
from numba import njit

LOG_FLOOR = 1e-12


@njit(cache=True)
def _affine(x, w, b):
    z = np.dot(x, w.T)
    n, k = z.shape
    for i in range(n):
        for j in range(k):
            z[i, j] += b[j]
    return z


@njit(cache=True)
def _sigmoid_inplace(z):
    n, k = z.shape
    for i in range(n):
        for j in range(k):
            a = z[i, j]
            if a >= 0.0:
                z[i, j] = 1.0 / (1.0 + np.exp(-a))
            else:
                ea = np.exp(a)
                z[i, j] = ea / (1.0 + ea)
    return z


def affine_act(x, w, b, act):
    z = _affine(x, w, b)
    if act == 0:
        return np.tanh(z, out=z)
    return _sigmoid_inplace(z)


def affine_logits(x, w, b):
    return _affine(x, w, b)


@njit(cache=True)
def softmax_rows(z):
    n, c = z.shape
    p = np.empty_like(z)
    for i in range(n):
        m = z[i, 0]
        for j in range(1, c):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(c):
            e = np.exp(z[i, j] - m)
            p[i, j] = e
            s += e
        for j in range(c):
            p[i, j] /= s
    return p


@njit(cache=True)
def act_vjp(h, dh, act):
    n, k = h.shape
    out = np.empty_like(h)
    if act == 0:
        for i in range(n):
            for j in range(k):
                out[i, j] = dh[i, j] * (1.0 - h[i, j] * h[i, j])
    else:
        for i in range(n):
            for j in range(k):
                out[i, j] = dh[i, j] * h[i, j] * (1.0 - h[i, j])
    return out


@njit(cache=True)
def softmax_vjp(p, g):
    n, c = p.shape
    out = np.empty_like(p)
    for i in range(n):
        s = 0.0
        for j in range(c):
            s += g[i, j] * p[i, j]
        for j in range(c):
            out[i, j] = p[i, j] * (g[i, j] - s)
    return out


@njit(cache=True)
def grad_weights(da, h_prev):
    return np.dot(da.T, h_prev)


@njit(cache=True)
def grad_bias(da):
    n, k = da.shape
    out = np.zeros(k)
    for i in range(n):
        for j in range(k):
            out[j] += da[i, j]
    return out


@njit(cache=True)
def grad_input(da, w):
    return np.dot(da, w)


@njit(cache=True)
def nll_sum(p, labels):
    total = 0.0
    for i in range(labels.shape[0]):
        y = labels[i]
        if y >= 0:
            v = p[i, y]
            if v < LOG_FLOOR:
                v = LOG_FLOOR
            total -= np.log(v)
    return total


@njit(cache=True)
def nll_grad_logits(p, labels):
    n, c = p.shape
    out = np.zeros_like(p)
    for i in range(n):
        y = labels[i]
        if y >= 0:
            for j in range(c):
                out[i, j] = p[i, j]
            out[i, y] -= 1.0
    return out
