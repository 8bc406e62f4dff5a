"""Paired-batch construction: partition tallies, determinism, and the
pool-vs-batch MMD bound."""

import collections

import numpy as np
import pytest

from dtn import batching


# ----------------------------------------------------------------- balance

def test_balance_equal_sizes_is_identity():
    out = batching.balance(10, 10, np.random.default_rng(0))
    assert np.array_equal(np.sort(out), np.arange(10))


def test_balance_contains_every_original_index():
    out = batching.balance(4, 10, np.random.default_rng(1))
    assert out.shape == (10,)
    assert set(out.tolist()) <= set(range(4))
    for i in range(4):
        assert i in out


def test_balance_single_candidate():
    out = batching.balance(1, 7, np.random.default_rng(2))
    assert np.array_equal(out, np.zeros(7, dtype=np.int64))


def test_balance_errors():
    with pytest.raises(ValueError):
        batching.balance(0, 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        batching.balance(6, 5, np.random.default_rng(0))


# --------------------------------------------------------------- build_plan

def test_single_batch_covers_everything():
    plan = batching.build_plan(100, 100, 200, 0)
    assert plan.n_batches == 1
    b = plan.batches[0]
    assert np.array_equal(np.sort(b.source_indices), np.arange(100))
    assert np.array_equal(np.sort(b.target_indices), np.arange(100))


def test_plan_tally_40_100_s20():
    plan = batching.build_plan(40, 100, 20, 3)
    assert plan.n_batches == 10
    src = np.concatenate([b.source_indices for b in plan.batches])
    tgt = np.concatenate([b.target_indices for b in plan.batches])
    assert all(len(b.source_indices) == 10 and len(b.target_indices) == 10
               for b in plan.batches)
    # every target index exactly once; source balanced to a multiset of 100
    assert np.array_equal(np.sort(tgt), np.arange(100))
    assert src.shape == (100,)
    counts = collections.Counter(src.tolist())
    assert set(counts) <= set(range(40))
    assert all(counts[i] >= 1 for i in range(40))


def test_plan_partition_property_over_configs():
    # exhaustive tally across 50 random configurations: the batches are a
    # permutation of the balanced+padded pools, and every original index
    # of both domains appears at least once
    rng = np.random.default_rng(99)
    for _ in range(50):
        n_s = int(rng.integers(1, 120))
        n_t = int(rng.integers(1, 120))
        s = 2 * int(rng.integers(1, max(n_s, n_t) + 1))
        plan = batching.build_plan(n_s, n_t, s, int(rng.integers(0, 2**31)))
        half = s // 2
        src = np.concatenate([b.source_indices for b in plan.batches])
        tgt = np.concatenate([b.target_indices for b in plan.batches])
        assert np.array_equal(np.sort(src), np.sort(plan.source_pool))
        assert np.array_equal(np.sort(tgt), np.sort(plan.target_pool))
        assert set(np.unique(src)) == set(range(n_s))
        assert set(np.unique(tgt)) == set(range(n_t))
        assert len(plan.source_pool) % half == 0
        assert plan.n_batches == len(plan.source_pool) // half
        for b in plan.batches:
            assert len(b.source_indices) == half == len(b.target_indices)


def test_plan_deterministic_by_seed():
    a = batching.build_plan(33, 70, 12, 42)
    b = batching.build_plan(33, 70, 12, 42)
    assert a.seed == b.seed == 42
    for x, y in zip(a.batches, b.batches):
        assert np.array_equal(x.source_indices, y.source_indices)
        assert np.array_equal(x.target_indices, y.target_indices)


def test_plan_generator_records_replayable_seed():
    gen = np.random.default_rng(7)
    a = batching.build_plan(33, 70, 12, gen)
    replay = batching.build_plan(33, 70, 12, a.seed)
    for x, y in zip(a.batches, replay.batches):
        assert np.array_equal(x.source_indices, y.source_indices)
        assert np.array_equal(x.target_indices, y.target_indices)


def test_fresh_seed_reshuffles_but_preserves_partition():
    a = batching.build_plan(60, 60, 20, 0)
    b = batching.build_plan(60, 60, 20, 1)
    assert not all(
        np.array_equal(x.source_indices, y.source_indices)
        for x, y in zip(a.batches, b.batches))
    for plan in (a, b):
        src = np.concatenate([x.source_indices for x in plan.batches])
        assert np.array_equal(np.sort(src), np.sort(plan.source_pool))


def test_build_plan_argument_errors():
    with pytest.raises(ValueError, match="even"):
        batching.build_plan(10, 10, 7, 0)
    with pytest.raises(ValueError):
        batching.build_plan(10, 10, 0, 0)
    with pytest.raises(ValueError, match="exceeds"):
        batching.build_plan(10, 10, 22, 0)
    with pytest.raises(ValueError):
        batching.build_plan(0, 10, 4, 0)


# ------------------------------------------------------------- verify_bound

def test_bound_tight_for_single_batch():
    rng = np.random.default_rng(5)
    x_s = rng.standard_normal((100, 4))
    x_t = rng.standard_normal((100, 4)) + 0.3
    plan = batching.build_plan(100, 100, 200, 11)
    lhs, rhs, holds = batching.verify_bound(x_s, x_t, plan)
    assert holds
    assert lhs == rhs


def test_bound_zero_for_identical_datasets():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((64, 3))
    plan = batching.build_plan(64, 64, 16, 2)  # 64 divisible by 8: no padding
    lhs, rhs, holds = batching.verify_bound(x, x, plan)
    assert lhs == 0.0
    assert holds


def test_bound_holds_over_random_plans():
    rng = np.random.default_rng(7)
    for case in range(100):
        n_batches = (2, 4, 8)[case % 3]
        s = 2 * 64 // n_batches
        x_s = rng.standard_normal((64, 8))
        x_t = rng.standard_normal((64, 8)) + rng.normal()
        plan = batching.build_plan(64, 64, s, int(rng.integers(0, 2**31)))
        assert plan.n_batches == n_batches
        lhs, rhs, holds = batching.verify_bound(x_s, x_t, plan)
        assert holds, f"case {case}: lhs {lhs} > rhs {rhs}"


def test_bound_holds_with_unbalanced_padded_domains():
    rng = np.random.default_rng(8)
    for case in range(30):
        n_s = int(rng.integers(5, 90))
        n_t = int(rng.integers(5, 90))
        s = 2 * int(rng.integers(2, min(n_s, n_t)))
        x_s = rng.standard_normal((n_s, 5))
        x_t = rng.standard_normal((n_t, 5)) * 1.5 + 0.7
        plan = batching.build_plan(n_s, n_t, s, case)
        _, _, holds = batching.verify_bound(x_s, x_t, plan)
        assert holds
