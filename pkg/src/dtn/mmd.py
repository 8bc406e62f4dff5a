"""Empirical maximum mean discrepancy between source and target samples.

Inputs follow the column-per-sample convention: a (k, n) matrix holds n
samples of dimension k. Production paths use the O(n) mean-difference
forms throughout; the explicit quadratic-form coefficient matrix exists
for oracles and verification, never on the training path.
"""

from dataclasses import dataclass

import numpy as np

from dtn.errors import ShapeError

PROB_TOL = 1e-9


def mmd_matrix(n_s, n_t):
    """Coefficient matrix M with MMD = Tr(X M X^T) for X = [X_s, X_t].

    Source block 1/n_s^2, target block 1/n_t^2, cross blocks -1/(n_s n_t).
    Quadratic in (n_s + n_t): build it only for verification.
    """
    if n_s < 1 or n_t < 1:
        raise ValueError(f"sample counts must be positive, got ({n_s}, {n_t})")
    n = n_s + n_t
    m = np.empty((n, n))
    m[:n_s, :n_s] = 1.0 / (n_s * n_s)
    m[n_s:, n_s:] = 1.0 / (n_t * n_t)
    m[:n_s, n_s:] = -1.0 / (n_s * n_t)
    m[n_s:, :n_s] = -1.0 / (n_s * n_t)
    return m


def _check_rows(h_s, h_t):
    if h_s.ndim != 2 or h_t.ndim != 2 or h_s.shape[0] != h_t.shape[0]:
        raise ShapeError(
            f"row dims must match, got {h_s.shape} vs {h_t.shape}"
        )
    if h_s.shape[1] < 1 or h_t.shape[1] < 1:
        raise ValueError("need at least one sample per domain")


def _mean_gap(h_s, h_t):
    return h_s.mean(axis=1) - h_t.mean(axis=1)


def marginal_mmd(h_s, h_t):
    """Squared distance between the domain mean vectors."""
    h_s, h_t = np.asarray(h_s, dtype=np.float64), np.asarray(h_t, dtype=np.float64)
    _check_rows(h_s, h_t)
    gap = _mean_gap(h_s, h_t)
    return float(gap @ gap)


def marginal_mmd_grad(h_s, h_t):
    """Per-sample gradients of marginal_mmd w.r.t. the feature columns.

    Every source column shares (2/n_s) * gap; every target column shares
    -(2/n_t) * gap. Returned as matrices shaped like the inputs.
    """
    h_s, h_t = np.asarray(h_s, dtype=np.float64), np.asarray(h_t, dtype=np.float64)
    _check_rows(h_s, h_t)
    gap = _mean_gap(h_s, h_t)
    g_s = np.broadcast_to(((2.0 / h_s.shape[1]) * gap)[:, None], h_s.shape).copy()
    g_t = np.broadcast_to((-(2.0 / h_t.shape[1]) * gap)[:, None], h_t.shape).copy()
    return g_s, g_t


def _check_posteriors(p, side):
    sums = p.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
    if bad.size:
        raise ValueError(
            f"{side} column {bad[0]} is not a probability vector (sum {sums[bad[0]]!r})"
        )


def conditional_mmd(p_s, p_t):
    """Sum over classes of the squared gap between mean posteriors."""
    p_s, p_t = np.asarray(p_s, dtype=np.float64), np.asarray(p_t, dtype=np.float64)
    _check_rows(p_s, p_t)
    _check_posteriors(p_s, "source")
    _check_posteriors(p_t, "target")
    gap = _mean_gap(p_s, p_t)
    return float(gap @ gap)


def conditional_mmd_grad(p_s, p_t):
    """Per-sample gradients of conditional_mmd w.r.t. the posterior columns."""
    p_s, p_t = np.asarray(p_s, dtype=np.float64), np.asarray(p_t, dtype=np.float64)
    _check_rows(p_s, p_t)
    _check_posteriors(p_s, "source")
    _check_posteriors(p_t, "target")
    gap = _mean_gap(p_s, p_t)
    g_s = np.broadcast_to(((2.0 / p_s.shape[1]) * gap)[:, None], p_s.shape).copy()
    g_t = np.broadcast_to((-(2.0 / p_t.shape[1]) * gap)[:, None], p_t.shape).copy()
    return g_s, g_t


@dataclass
class MmdTerms:
    """Both penalty values plus their per-sample gradients, split by domain."""

    mmd_mar: float
    mmd_con: float
    grad_h_source: np.ndarray
    grad_h_target: np.ndarray
    grad_p_source: np.ndarray
    grad_p_target: np.ndarray


def mmd_terms(h_s, h_t, p_s, p_t):
    """All four quantities a training step needs, in one O(n) pass."""
    gh_s, gh_t = marginal_mmd_grad(h_s, h_t)
    gp_s, gp_t = conditional_mmd_grad(p_s, p_t)
    return MmdTerms(
        mmd_mar=marginal_mmd(h_s, h_t),
        mmd_con=conditional_mmd(p_s, p_t),
        grad_h_source=gh_s,
        grad_h_target=gh_t,
        grad_p_source=gp_s,
        grad_p_target=gp_t,
    )
