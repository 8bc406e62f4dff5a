"""Shared oracles: an independent forward implementation and a central
finite-difference gradient over every parameter entry."""

import numpy as np
import pytest

from dtn import network


def ref_forward(params, specs, x):
    """Straightforward per-sample forward pass, kept deliberately naive."""
    outs = []
    for row in np.atleast_2d(x):
        h = row
        hiddens = []
        for i, s in enumerate(specs[:-1]):
            z = params.weights[i] @ h + params.biases[i]
            h = np.tanh(z) if s.activation is network.Activation.TANH else 1.0 / (1.0 + np.exp(-z))
            hiddens.append(h)
        z = params.weights[-1] @ h + params.biases[-1]
        e = np.exp(z - z.max())
        outs.append((hiddens, e / e.sum()))
    return outs


def fd_gradient(objective, params, step=1e-5):
    """Central finite differences of objective(params) w.r.t. every entry."""
    grads_w, grads_b = [], []
    for arrs, grads in ((params.weights, grads_w), (params.biases, grads_b)):
        for arr in arrs:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                plus = objective()
                arr[idx] = orig - step
                minus = objective()
                arr[idx] = orig
                g[idx] = (plus - minus) / (2.0 * step)
            grads.append(g)
    return grads_w, grads_b


def max_rel_err(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
