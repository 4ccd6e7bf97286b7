import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hisparse.model import FlatSparsity, SparsityTree, is_sparse
from hisparse.oracle import random_flat_sparsity, random_test_vector, random_tree
from hisparse.threshold import (EnumerationCapExceeded, brute_force_flat, brute_force_tree,
                                enumerate_supports, flat_support, select_top_k, support_indices,
                                threshold, threshold_flat, threshold_tree, tree_support)


def _energy(z, omega):
    return float(np.sum(np.abs(np.asarray(z)[omega]) ** 2))


def _all_flat_supports(fp):
    """Independent enumeration of every saturating (s, sigma) support."""
    for blocks in itertools.combinations(range(fp.N), fp.s):
        for inner in itertools.product(itertools.combinations(range(fp.n), fp.sigma),
                                       repeat=fp.s):
            yield sorted(b * fp.n + i for b, pos in zip(blocks, inner) for i in pos)


# -- select_top_k ---------------------------------------------------------

def test_select_top_k_examples():
    assert select_top_k(np.array([3.0, -5.0, 1.0, 0.0]), 2).tolist() == [0, 1]
    assert select_top_k(np.array([1.0, 1.0, 0.0]), 1).tolist() == [0]
    assert select_top_k(np.zeros(4), 2).tolist() == [0, 1]
    assert select_top_k(np.ones(3), 0).size == 0
    with pytest.raises(ValueError):
        select_top_k(np.ones(3), 4)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=30), st.data())
def test_select_top_k_matches_stable_sort(values, data):
    z = np.array(values, dtype=float)
    k = data.draw(st.integers(0, z.size))
    # stable sort on -|z| gives the lowest-index tie break
    expected = np.sort(np.argsort(-np.abs(z), kind="stable")[:k])
    assert np.array_equal(select_top_k(z, k), expected)


# -- flat thresholding ----------------------------------------------------

def test_threshold_flat_examples():
    z = np.array([0.1, 2.0, 0.0, 1.0, 1.0, 0.5])
    fp = FlatSparsity(2, 3, 1, 2)
    assert threshold_flat(z, fp).flatten().tolist() == [0, 1]
    assert brute_force_flat(z, fp).flatten().tolist() == [0, 1]
    full = FlatSparsity(2, 3, 2, 3)
    assert threshold_flat(z, full).flatten().tolist() == list(range(6))


def test_threshold_flat_fixed_point():
    fp = FlatSparsity(4, 5, 2, 3)
    rng = np.random.default_rng(0)
    x = np.zeros(20)
    x[[5, 6, 8, 15, 17, 19]] = rng.standard_normal(6) + 3.0
    assert threshold_flat(x, fp).flatten().tolist() == [5, 6, 8, 15, 17, 19]


def test_threshold_always_returns_saturated_support():
    fp = FlatSparsity(4, 3, 2, 2)
    z = np.zeros(12)
    z[4] = 1.0
    omega = flat_support(z, fp)
    assert omega.size == 4 and 4 in omega


def test_brute_force_flat_examples():
    fp = FlatSparsity(3, 2, 2, 1)
    # the two largest single entries in distinct blocks are 5 (idx 0) and 4 (idx 3)
    assert brute_force_flat(np.array([5.0, 0, 0, 4, 3, 0]), fp).flatten().tolist() == [0, 3]
    assert brute_force_flat(np.zeros(6), fp).flatten().tolist() == [0, 2]
    assert enumerate_supports(fp).shape[0] == 12


def test_brute_force_refuses_beyond_cap():
    with pytest.raises(EnumerationCapExceeded):
        brute_force_flat(np.zeros(200), FlatSparsity(10, 20, 5, 10), cap=10**6)


def test_brute_force_flat_against_itertools_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        fp = random_flat_sparsity(rng, 10)
        z = rng.standard_normal(fp.d)
        best = max(_energy(z, om) for om in _all_flat_supports(fp))
        assert _energy(z, brute_force_flat(z, fp).flatten()) == pytest.approx(best, rel=1e-14)


# -- tree thresholding ----------------------------------------------------

def test_tree_matches_flat_on_depth_two():
    rng = np.random.default_rng(2)
    for _ in range(10**4 // 10):
        fp = random_flat_sparsity(rng, 40)
        tree = fp.to_tree()
        for _ in range(10):
            z = random_test_vector(rng, fp.d)
            assert np.array_equal(flat_support(z, fp), tree_support(z, tree))


def test_tree_single_nonzero():
    tree = SparsityTree.uniform([(2, 1), (2, 1), (3, 2)])
    z = np.zeros(tree.d)
    z[7] = -2.0
    omega = support_indices(z, tree)
    assert 7 in omega


def test_tree_depth3_matches_brute_force():
    tree = SparsityTree.uniform([(2, 1), (2, 2), (2, 1)])
    assert tree.d == 8
    rng = np.random.default_rng(4)
    for _ in range(200):
        z = rng.standard_normal(8)
        fast = threshold_tree(z, tree).flatten()
        ref = brute_force_tree(z, tree).flatten()
        assert _energy(z, fast) == pytest.approx(_energy(z, ref), rel=1e-12)


def test_brute_force_tree_properties():
    tree = SparsityTree.uniform([(3, 2), (2, 1)])
    assert np.array_equal(brute_force_tree(np.arange(6.0), tree).flatten(),
                          brute_force_flat(np.arange(6.0), FlatSparsity(3, 2, 2, 1)).flatten())
    deep = SparsityTree.uniform([(1, 1), (3, 2), (2, 1)])
    rng = np.random.default_rng(5)
    z = rng.standard_normal(6)
    masks = enumerate_supports(deep)
    best = brute_force_tree(z, deep).flatten()
    assert all(_energy(z, best) >= _energy(z, np.flatnonzero(m)) for m in masks)
    # ties: all-ones picks the lexicographically first saturating support
    first = np.flatnonzero(masks[0])
    assert np.array_equal(brute_force_tree(np.ones(6), deep).flatten(), first)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_thresholding_is_optimal(seed):
    rng = np.random.default_rng(seed)
    sp = random_flat_sparsity(rng, 12) if rng.random() < 0.5 else random_tree(rng, 12)
    z = random_test_vector(rng, sp.d)
    omega = support_indices(z, sp)
    ref = brute_force_tree(z, sp if isinstance(sp, SparsityTree) else sp.to_tree()).flatten()
    assert _energy(z, omega) == pytest.approx(_energy(z, ref), rel=1e-12, abs=0)
    marker = np.zeros(sp.d)
    marker[omega] = 1
    assert is_sparse(marker, sp)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_selectivity_against_random_admissible_supports(seed):
    from hisparse.ripcalc import random_support

    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 30, 4)
    z = rng.standard_normal(tree.d)
    best = _energy(z, support_indices(z, tree))
    for _ in range(20):
        assert best >= _energy(z, random_support(tree, rng)) - 1e-12


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([-3.0, 0.5, 2.0, 1e3, -1e-3]))
def test_scaling_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    sp = random_flat_sparsity(rng, 40) if rng.random() < 0.5 else random_tree(rng, 40)
    z = rng.standard_normal(sp.d)
    assert np.array_equal(support_indices(alpha * z, sp), support_indices(z, sp))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_block_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    fp = random_flat_sparsity(rng, 60, min_blocks=2)
    z = rng.standard_normal(fp.d)  # continuous: no ties
    perm = rng.permutation(fp.N)
    zp = z.reshape(fp.N, fp.n)[perm].ravel()
    blocks = set(np.unique(flat_support(z, fp) // fp.n))
    blocks_p = set(np.unique(flat_support(zp, fp) // fp.n))
    assert {int(perm[b]) for b in blocks_p} == blocks


def test_generic_dispatch_and_complex_input():
    fp = FlatSparsity(3, 2, 1, 1)
    z = np.array([0, 1j, 0, 0, 2, 0])
    assert threshold(z, fp).flatten().tolist() == [4]
    assert threshold(z, fp.to_tree()).flatten().tolist() == [4]
    with pytest.raises(ValueError):
        threshold(np.zeros(5), fp)


def test_linear_time_scaling():
    fp_of = {d: FlatSparsity(d // 100, 100, max(1, d // 1000), 20) for d in
             (10**3, 10**4, 10**5, 10**6)}
    rng = np.random.default_rng(6)
    times = {}
    for d, fp in fp_of.items():
        z = rng.standard_normal(d)
        reps = max(1, 10**6 // d)
        t0 = time.perf_counter()
        for _ in range(reps):
            flat_support(z, fp)
        times[d] = (time.perf_counter() - t0) / reps
    ds = np.array(sorted(times), dtype=float)
    slope = np.polyfit(np.log(ds[1:]), np.log([times[int(d)] for d in ds[1:]]), 1)[0]
    # fixed overheads flatten the small end; the fit ignores d=10^3
    assert slope < 1.3
