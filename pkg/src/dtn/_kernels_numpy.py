"""Pure-numpy implementations of the per-batch network kernels.

All functions take float64 arrays with samples in rows. Weight matrices
are (output_dim, input_dim) so a layer computes act(x @ w.T + b).
Activation codes: 0 = tanh, 1 = sigmoid.
"""

import numpy as np

LOG_FLOOR = 1e-12


def _sigmoid(a):
    # stable: never exponentiates a positive argument
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def affine_act(x, w, b, act):
    """Fused affine + activation: act(x @ w.T + b)."""
    z = x @ w.T + b
    if act == 0:
        return np.tanh(z)
    return _sigmoid(z)


def affine_logits(x, w, b):
    return x @ w.T + b


def softmax_rows(z):
    """Row-wise softmax with max-subtraction for stability."""
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def act_vjp(h, dh, act):
    """Gradient through the activation, expressed via its output h."""
    if act == 0:
        return dh * (1.0 - h * h)
    return dh * h * (1.0 - h)


def softmax_vjp(p, g):
    """Gradient through softmax: dz = p * (g - <g, p> per row)."""
    return p * (g - (g * p).sum(axis=1, keepdims=True))


def grad_weights(da, h_prev):
    return da.T @ h_prev


def grad_bias(da):
    return da.sum(axis=0)


def grad_input(da, w):
    return da @ w


def nll_sum(p, labels):
    """Summed negative log-likelihood over rows with labels >= 0."""
    mask = labels >= 0
    if not mask.any():
        return 0.0
    picked = p[np.flatnonzero(mask), labels[mask]]
    return float(-np.log(np.maximum(picked, LOG_FLOOR)).sum())


def nll_grad_logits(p, labels):
    """d(nll_sum)/d(logits): (p - onehot) on labeled rows, 0 elsewhere."""
    out = np.zeros_like(p)
    rows = np.flatnonzero(labels >= 0)
    out[rows] = p[rows]
    out[rows, labels[rows]] -= 1.0
    return out
