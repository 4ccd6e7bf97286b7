"""Restricted isometry constants: sample bounds, support counts and estimators.

Sample-complexity bounds are for an ``m x d`` real Gaussian matrix scaled by
``1/sqrt(m)``. The recovery constants follow the HTP-style analysis with
hierarchical RIP constants: contraction ``rho = sqrt(2 c2^2 / (1 - c1^2))``
with ``c2 = delta_{3s,2sigma}``, ``c1 = delta_{2s,2sigma}`` and noise factor
``tau <= 5.15 / (1 - rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .model import FlatSparsity, Sparsity, SparsityTree, as_tree

__all__ = [
    "RipEstimate",
    "GuaranteeConstants",
    "gaussian_sample_bound",
    "tree_sample_bound",
    "unstructured_sample_bound",
    "count_flat_supports",
    "count_tree_supports",
    "uniform_support_count",
    "guarantee_constants",
    "noise_factor",
    "linear_bound_slope",
    "spectral_deviation",
    "exhaustive_rip",
    "monte_carlo_rip",
    "random_support",
    "RIP_THRESHOLD",
    "TAU_NUMERATOR",
    "DEFAULT_RIP_CAP",
]

RIP_THRESHOLD = 1.0 / math.sqrt(3.0)
TAU_NUMERATOR = 5.15
DEFAULT_RIP_CAP = 10**5


@dataclass(frozen=True)
class RipEstimate:
    delta_lower: float
    method: str
    supports_checked: int


@dataclass(frozen=True)
class GuaranteeConstants:
    rho: float
    tau_bound: float
    condition_met: bool


def _check_delta_eps(delta, epsilon):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")


def gaussian_sample_bound(fp: FlatSparsity, delta: float, epsilon: float) -> int:
    """Smallest ``m`` for which ``delta_{s,sigma}(A/sqrt(m)) <= delta`` w.p. ``1 - epsilon``."""
    _check_delta_eps(delta, epsilon)
    s, sigma = fp.s, fp.sigma
    terms = (1 * s) * math.log(math.e * fp.N / s)
    terms += (s * sigma) * math.log(math.e * fp.n / sigma)
    rhs = 36.0 / (7.0 * delta) * (terms + math.log(12.0 / delta) + math.log(1.0 / epsilon))
    return math.ceil(rhs)


def tree_sample_bound(levels: Sequence[tuple[int, int]], delta: float, epsilon: float,
                      weights: str = "adjacent") -> int:
    """Sample bound for uniform hierarchical sparsity with levels ``[(n_0, s_0), ...]``.

    ``weights="adjacent"`` multiplies level ``i`` by ``s_{i-1} s_i`` (with
    ``s_{-1} = 1``). ``weights="product"`` uses ``s_0 s_1 ... s_i``, which is
    what the support count of a uniform tree deeper than two levels gives.
    Both agree for one or two levels.
    """
    _check_delta_eps(delta, epsilon)
    if weights not in ("adjacent", "product"):
        raise ValueError(f"unknown weights {weights!r}")
    terms = 0.0
    prev = 1
    for n_i, s_i in levels:
        if not 1 <= s_i <= n_i:
            raise ValueError(f"level ({n_i}, {s_i}) violates 1 <= s <= n")
        terms += (prev * s_i) * math.log(math.e * n_i / s_i)
        prev = prev * s_i if weights == "product" else s_i
    rhs = 36.0 / (7.0 * delta) * (terms + math.log(12.0 / delta) + math.log(1.0 / epsilon))
    return math.ceil(rhs)


def unstructured_sample_bound(d: int, k: int, delta: float, epsilon: float) -> int:
    """Same bound for plain ``k``-sparse vectors in dimension ``d``."""
    return tree_sample_bound([(d, k)], delta, epsilon)


def count_flat_supports(fp: FlatSparsity) -> int:
    return math.comb(fp.N, fp.s) * math.comb(fp.n, fp.sigma) ** fp.s


def _elementary_symmetric(values: Sequence[int], k: int) -> int:
    e = [1] + [0] * k
    for v in values:
        for j in range(k, 0, -1):
            e[j] += e[j - 1] * v
    return e[k]


@lru_cache(maxsize=256)
def count_tree_supports(tree: SparsityTree) -> int:
    """Number of budget-saturating supports, by the recursion over children subsets."""
    tree = as_tree(tree)
    counts = [1] * tree.d
    for depth in range(tree.depth - 1, -1, -1):
        n, s, off = (a.tolist() for a in tree.level_arrays(depth))
        # identical sibling groups are common (uniform trees): solve each once
        memo: dict = {}
        nxt = []
        for p in range(len(n)):
            key = (tuple(counts[off[p]:off[p] + n[p]]), s[p])
            if key not in memo:
                memo[key] = _elementary_symmetric(key[0], key[1])
            nxt.append(memo[key])
        counts = nxt
    return counts[0]


def uniform_support_count(levels: Sequence[tuple[int, int]], exponents: str = "product") -> int:
    """Closed-form support count of a uniform tree.

    ``exponents="product"`` raises ``C(n_i, s_i)`` to ``s_0 ... s_{i-1}``,
    the number of active vertices on level ``i``. ``"adjacent"`` uses
    ``s_{i-1}`` alone, which only matches for trees of depth two or less.
    """
    total = 1
    prev = 1
    for n_i, s_i in levels:
        total *= math.comb(n_i, s_i) ** prev
        prev = prev * s_i if exponents == "product" else s_i
    return total


def linear_bound_slope(c3: float) -> float:
    """Slope of the linear bound on the noise term in ``c1``."""
    return (4.733 * c3 + 2.637) / 2.0


def noise_factor(delta_2s_2sig: float, delta_s_sig: float) -> float:
    """``(sqrt(2(1-c1)) + c3) / (1 - c1)`` with ``c3 = sqrt(1 + delta_{s,sigma})``."""
    c1 = delta_2s_2sig
    c3 = math.sqrt(1.0 + delta_s_sig)
    return (math.sqrt(2.0 * (1.0 - c1)) + c3) / (1.0 - c1)


def guarantee_constants(delta_3s_2sig: float, delta_2s_2sig: float) -> GuaranteeConstants:
    """Contraction and noise constants of the recovery guarantee.

    ``tau_bound`` is ``inf`` when the RIP condition fails.
    """
    for name, val in (("delta_3s_2sig", delta_3s_2sig), ("delta_2s_2sig", delta_2s_2sig)):
        if not 0 <= val < 1:
            raise ValueError(f"{name} must lie in [0, 1), got {val}")
    if delta_2s_2sig > delta_3s_2sig:
        raise ValueError("RIP constants must be monotone: delta_2s_2sig <= delta_3s_2sig")
    rho = math.sqrt(2.0 * delta_3s_2sig ** 2 / (1.0 - delta_2s_2sig ** 2))
    met = delta_3s_2sig < RIP_THRESHOLD
    tau = TAU_NUMERATOR / (1.0 - rho) if met else math.inf
    return GuaranteeConstants(rho=rho, tau_bound=tau, condition_met=met)


def _gram_deviation(cols: np.ndarray) -> np.ndarray:
    """``max |eig(A_S^* A_S) - 1|`` for a stack of column blocks ``(L, m, k)``."""
    gram = np.conj(np.swapaxes(cols, 1, 2)) @ cols
    eig = np.linalg.eigvalsh(gram)
    return np.maximum(np.abs(eig[:, 0] - 1.0), np.abs(eig[:, -1] - 1.0))


def spectral_deviation(matrix, omega) -> float:
    """``||Id - A_Omega^* A_Omega||`` in operator norm."""
    cols = np.asarray(matrix)[:, np.asarray(omega, dtype=np.intp)]
    if cols.shape[1] == 0:
        return 0.0
    return float(_gram_deviation(cols[None])[0])


def _matrix_of(op) -> np.ndarray:
    return op.to_dense() if hasattr(op, "to_dense") else np.asarray(op)


def _max_deviation(a: np.ndarray, supports, chunk: int = 4096) -> float:
    """Largest Gram deviation over supports given as a mask matrix or equal-size index rows."""
    supports = np.asarray(supports)
    if supports.dtype == bool:
        sizes = supports.sum(axis=1)
        return max(_max_deviation(a, np.nonzero(supports[sizes == k])[1].reshape(-1, k), chunk)
                   for k in np.unique(sizes))
    best = 0.0
    for lo in range(0, supports.shape[0], chunk):
        idx = supports[lo:lo + chunk]
        cols = np.moveaxis(a[:, idx], 1, 0)
        best = max(best, float(_gram_deviation(cols).max()))
    return best


def exhaustive_rip(op, sparsity: Sparsity, cap: int = DEFAULT_RIP_CAP) -> RipEstimate:
    """Exact RIP constant of ``op`` for ``sparsity`` by enumerating all supports.

    Only budget-saturating supports are visited; the Gram matrix of any
    smaller admissible support is a principal submatrix of one of them, so
    its spectrum is interlaced and cannot deviate further from 1.
    """
    from .threshold import enumerate_supports

    a = _matrix_of(op)
    supports = enumerate_supports(sparsity, cap)
    return RipEstimate(_max_deviation(a, supports), "exhaustive", supports.shape[0])


def random_support(sparsity: Sparsity, rng: np.random.Generator) -> np.ndarray:
    """Uniformly drawn budget-saturating support."""
    if isinstance(sparsity, FlatSparsity):
        blocks = np.sort(rng.choice(sparsity.N, sparsity.s, replace=False))
        pos = np.sort(rng.random((sparsity.s, sparsity.n)).argsort(axis=1)[:, :sparsity.sigma],
                      axis=1)
        return (blocks[:, None] * sparsity.n + pos).ravel()
    tree = as_tree(sparsity)
    frontier = [tree.root]
    for _ in range(tree.depth):
        nxt = []
        for v in frontier:
            chosen = np.sort(rng.choice(tree.n_of(v), tree.s_of(v), replace=False))
            nxt.extend(tree.child(v, int(i)) for i in chosen)
        frontier = nxt
    return np.array(sorted(p for _, p in frontier), dtype=np.intp)


def monte_carlo_rip(op, sparsity: Sparsity, trials: int, seed=None) -> RipEstimate:
    """Lower bound on the RIP constant from ``trials`` random supports."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    a = _matrix_of(op)
    masks = np.zeros((trials, sparsity.d), dtype=bool)
    for i in range(trials):
        masks[i, random_support(sparsity, rng)] = True
    return RipEstimate(_max_deviation(a, masks), "monte_carlo", trials)
