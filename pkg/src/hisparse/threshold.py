"""Hard thresholding operators and exhaustive reference implementations.

All selections break ties towards the lowest index, at the leaf level and at
every block level, so the operators are deterministic functions of their
input. Selection uses ``np.partition`` (introselect) and only the selected
indices are sorted, keeping the cost linear in the dimension.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .model import (FlatSparsity, HierarchicalSupport, Sparsity, SparsityTree,
                    as_tree, support_from_indices)

__all__ = [
    "EnumerationCapExceeded",
    "select_top_k",
    "flat_support",
    "tree_support",
    "threshold_flat",
    "threshold_tree",
    "threshold",
    "support_indices",
    "enumerate_supports",
    "brute_force_flat",
    "brute_force_tree",
    "DEFAULT_ENUMERATION_CAP",
]

DEFAULT_ENUMERATION_CAP = 10**6


class EnumerationCapExceeded(RuntimeError):
    pass


def select_top_k(z, k: int) -> np.ndarray:
    """Indices of the ``k`` entries of largest magnitude, sorted ascending.

    >>> select_top_k([3, -5, 1, 0], 2)
    array([0, 1])
    """
    a = np.abs(np.asarray(z)).ravel()
    d = a.shape[0]
    if not 0 <= k <= d:
        raise ValueError(f"k={k} outside [0, {d}]")
    if k == 0:
        return np.empty(0, dtype=np.intp)
    if k == d:
        return np.arange(d, dtype=np.intp)
    t = np.partition(a, d - k)[d - k]
    above = np.flatnonzero(a > t)
    ties = np.flatnonzero(a == t)[:k - above.size]
    return np.sort(np.concatenate((above, ties)))


def _top_k_rows(a: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask keeping the ``k`` largest entries of every row of ``a``."""
    n = a.shape[1]
    if k >= n:
        return np.ones(a.shape, dtype=bool)
    t = np.partition(a, n - k, axis=1)[:, n - k, None]
    above = a > t
    need = k - above.sum(axis=1, keepdims=True)
    ties = a == t
    return above | (ties & (np.cumsum(ties, axis=1) <= need))


def _top_k_groups(values, energy, n, s, off, uniform):
    """Per-group selection; returns the kept mask and the kept energy per group."""
    if uniform:
        n0, s0 = int(n[0]), int(s[0])
        keep = _top_k_rows(values.reshape(-1, n0), s0)
        scores = np.where(keep, energy.reshape(-1, n0), 0.0).sum(axis=1)
        return keep.ravel(), scores
    keep = np.zeros(values.shape[0], dtype=bool)
    scores = np.empty(len(n))
    for p in range(len(n)):
        lo, hi = int(off[p]), int(off[p] + n[p])
        idx = select_top_k(values[lo:hi], int(s[p])) + lo
        keep[idx] = True
        scores[p] = energy[idx].sum()
    return keep, scores


def flat_support(z, fp: FlatSparsity) -> np.ndarray:
    """Sorted leaf indices of the best ``(s, sigma)``-sparse approximation of ``z``."""
    z = np.asarray(z)
    if z.shape != (fp.d,):
        raise ValueError(f"vector has shape {z.shape}, expected ({fp.d},)")
    a = np.abs(z).reshape(fp.N, fp.n)
    keep = _top_k_rows(a, fp.sigma)
    scores = np.where(keep, a * a, 0.0).sum(axis=1)
    blocks = select_top_k(scores, fp.s)
    rows = keep[blocks]
    return (np.nonzero(rows)[1] + np.repeat(blocks * fp.n, fp.sigma)).astype(np.intp)


def tree_support(z, tree: SparsityTree) -> np.ndarray:
    """Sorted leaf indices of the best sparse approximation of ``z`` on ``tree``."""
    z = np.asarray(z)
    if z.shape != (tree.d,):
        raise ValueError(f"vector has shape {z.shape}, expected ({tree.d},)")
    values = np.abs(z)
    energy = values * values
    shape = tree.uniform_shape
    keeps = [None] * tree.depth
    for depth in range(tree.depth - 1, -1, -1):
        n, s, off = tree.level_arrays(depth)
        keeps[depth], energy = _top_k_groups(values, energy, n, s, off,
                                             uniform=shape is not None)
        values = energy
    # drop selections that do not hang off an active chain from the root
    active = np.ones(1, dtype=bool)
    for depth in range(tree.depth):
        n, _, _ = tree.level_arrays(depth)
        active = keeps[depth] & np.repeat(active, n)
    return np.flatnonzero(active)


def support_indices(z, sparsity: Sparsity) -> np.ndarray:
    """Index-array form of the thresholding operator, used by the solvers."""
    if isinstance(sparsity, FlatSparsity):
        return flat_support(z, sparsity)
    return tree_support(z, sparsity)


def _flat_to_support(omega: np.ndarray, fp: FlatSparsity) -> HierarchicalSupport:
    blocks, pos = np.divmod(omega, fp.n)
    selected = {(0, 0): tuple(int(b) for b in np.unique(blocks))}
    for b in selected[(0, 0)]:
        selected[(1, b)] = tuple(int(p) for p in pos[blocks == b])
    return HierarchicalSupport.from_mapping(fp, selected)


def threshold_flat(z, fp: FlatSparsity) -> HierarchicalSupport:
    """Hierarchical thresholding for two-level ``(s, sigma)`` sparsity.

    Every block is cut to its ``sigma`` largest entries, the ``s`` blocks with
    the largest remaining energy are kept. The result always holds exactly
    ``s * sigma`` indices, zeros included when ``z`` has fewer nonzeros.
    """
    return _flat_to_support(flat_support(z, fp), fp)


def threshold_tree(z, tree: SparsityTree) -> HierarchicalSupport:
    """Thresholding on a general sparsity tree, level by level from the leaves."""
    # saturated supports may contain zeros, so rebuild the selection from indices
    return support_from_indices(tree, tree_support(z, tree))


def threshold(z, sparsity: Sparsity) -> HierarchicalSupport:
    if isinstance(sparsity, FlatSparsity):
        return threshold_flat(z, sparsity)
    return threshold_tree(z, sparsity)


@lru_cache(maxsize=256)
def _enumerate_tree(tree: SparsityTree) -> np.ndarray:
    def rec(v):
        depth, pos = v
        if depth == tree.depth:
            return [(pos,)]
        kids = tree.children(v)
        out = []
        for w in itertools.combinations(kids, tree.s_of(v)):
            for parts in itertools.product(*(rec(c) for c in w)):
                out.append(tuple(itertools.chain.from_iterable(parts)))
        return out

    supports = sorted(tuple(sorted(t)) for t in rec(tree.root))
    masks = np.zeros((len(supports), tree.d), dtype=bool)
    for i, t in enumerate(supports):
        masks[i, list(t)] = True
    masks.setflags(write=False)
    return masks


def enumerate_supports(sparsity: Sparsity, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All budget-saturating supports as rows of a boolean ``(L, d)`` mask.

    Rows are ordered lexicographically by their sorted index tuples. Every
    admissible support is a subset of one of them; on trees with uneven
    branches the rows can hold different numbers of indices.
    """
    from .ripcalc import count_tree_supports

    tree = as_tree(sparsity)
    count = count_tree_supports(tree)
    if count > cap:
        raise EnumerationCapExceeded(
            f"{count} supports exceed the enumeration cap of {cap}")
    return _enumerate_tree(tree)


def _brute_force(z, sparsity, cap):
    z = np.asarray(z)
    tree = as_tree(sparsity)
    if z.shape != (tree.d,):
        raise ValueError(f"vector has shape {z.shape}, expected ({tree.d},)")
    supports = enumerate_supports(sparsity, cap)
    e = np.abs(z) ** 2
    energies = supports @ e
    # argmax returns the first maximiser, i.e. the lexicographically smallest
    best = np.flatnonzero(supports[int(np.argmax(energies))])
    return support_from_indices(sparsity, best)


def brute_force_flat(z, fp: FlatSparsity, cap: int = DEFAULT_ENUMERATION_CAP) -> HierarchicalSupport:
    """Exact maximiser of ``||z_Omega||`` over all saturating ``(s, sigma)`` supports."""
    return _brute_force(z, fp, cap)


def brute_force_tree(z, tree: SparsityTree, cap: int = DEFAULT_ENUMERATION_CAP) -> HierarchicalSupport:
    return _brute_force(z, tree, cap)
