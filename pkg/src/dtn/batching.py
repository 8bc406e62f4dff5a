"""Paired source/target mini-batch construction.

The smaller domain is equalized to the larger by randomly copying index
references; both index pools are then padded to a multiple of half the
batch size, shuffled, and chunked so each batch holds exactly S/2 source
and S/2 target samples. Copies are index references only, never feature
storage.
"""

from dataclasses import dataclass, field

import numpy as np


def _as_generator(rng):
    """Accept an int seed or a Generator; return (generator, recorded seed).

    Generators are not used directly: a child seed is drawn and a fresh
    stream built from it, so the recorded seed alone replays every draw.
    """
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng)
    seed = int(rng.integers(0, 2**63 - 1))
    return np.random.default_rng(seed), seed


def _ensure_generator(rng):
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    return rng


def balance(n_small, n_large, rng):
    """Index multiset of size n_large over a dataset of n_small samples.

    All n_small original indices appear, plus n_large - n_small uniform
    random copies.
    """
    if n_small < 1:
        raise ValueError("cannot balance an empty dataset")
    if n_large < n_small:
        raise ValueError(f"n_large {n_large} < n_small {n_small}")
    gen = _ensure_generator(rng)
    extra = gen.integers(0, n_small, size=n_large - n_small)
    return np.concatenate([np.arange(n_small, dtype=np.int64), extra.astype(np.int64)])


@dataclass
class PairedBatch:
    """Index lists selecting S/2 source and S/2 target samples."""

    source_indices: np.ndarray
    target_indices: np.ndarray


@dataclass
class BatchPlan:
    """A partition of both balanced index pools into paired batches."""

    batches: list
    seed: int
    batch_size: int
    source_pool: np.ndarray = field(repr=False, default=None)
    target_pool: np.ndarray = field(repr=False, default=None)

    @property
    def n_batches(self):
        return len(self.batches)


def build_plan(n_s, n_t, batch_size, rng):
    """Partition both domains into batches of S/2 + S/2 samples.

    `rng` may be an int seed (two calls with equal arguments then yield
    bit-identical plans) or a Generator, in which case a child seed is
    drawn from it and recorded on the plan.
    """
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch size must be even and >= 2, got {batch_size}")
    if n_s < 1 or n_t < 1:
        raise ValueError("both domains need at least one sample")
    n = max(n_s, n_t)
    if batch_size > 2 * n:
        raise ValueError(
            f"batch size {batch_size} exceeds twice the balanced domain size {n}"
        )
    gen, seed = _as_generator(rng)
    half = batch_size // 2

    src_pool = balance(n_s, n, gen) if n_s < n else np.arange(n_s, dtype=np.int64)
    tgt_pool = balance(n_t, n, gen) if n_t < n else np.arange(n_t, dtype=np.int64)

    # pad both pools up to a multiple of S/2 with extra uniform copies so
    # every batch holds the same sample counts
    pad = (-n) % half
    if pad:
        src_pool = np.concatenate([src_pool, gen.integers(0, n_s, size=pad).astype(np.int64)])
        tgt_pool = np.concatenate([tgt_pool, gen.integers(0, n_t, size=pad).astype(np.int64)])

    gen.shuffle(src_pool)
    gen.shuffle(tgt_pool)

    n_batches = len(src_pool) // half
    batches = [
        PairedBatch(
            src_pool[k * half:(k + 1) * half].copy(),
            tgt_pool[k * half:(k + 1) * half].copy(),
        )
        for k in range(n_batches)
    ]
    return BatchPlan(batches, seed, batch_size, src_pool, tgt_pool)


def verify_bound(x_s, x_t, plan):
    """Check pool-level MMD <= N^2 * sum of per-batch MMDs over batch means.

    Both sides are evaluated over the plan's balanced index pools (the
    multisets actually partitioned into batches). Returns (lhs, rhs, holds)
    with holds = lhs <= rhs + 1e-10.
    """
    x_s = np.asarray(x_s, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    # index arrays are sorted before each mean so summation order is a
    # function of the multiset alone; the N=1 bound is then tight exactly
    gap = (x_s[np.sort(plan.source_pool)].mean(axis=0)
           - x_t[np.sort(plan.target_pool)].mean(axis=0))
    lhs = float(gap @ gap)
    n = plan.n_batches
    per_batch = 0.0
    for b in plan.batches:
        g = (x_s[np.sort(b.source_indices)].mean(axis=0)
             - x_t[np.sort(b.target_indices)].mean(axis=0))
        per_batch += float(g @ g)
    rhs = n * n * per_batch
    return lhs, rhs, lhs <= rhs + 1e-10
