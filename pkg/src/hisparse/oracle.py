"""Randomised property suites comparing fast paths against exhaustive references.

Every case draws from ``np.random.default_rng([seed, suite, case])`` so a
failure is reproduced from ``(seed, case)`` alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import FlatSparsity, SparsityTree, TreeNode, complete_tree, is_sparse
from .ripcalc import (count_flat_supports, count_tree_supports, exhaustive_rip, random_support,
                      spectral_deviation)
from .threshold import brute_force_tree, enumerate_supports, support_indices

__all__ = [
    "SuiteReport",
    "random_flat_sparsity",
    "random_tree",
    "random_test_vector",
    "threshold_suite",
    "rip_structure_suite",
    "count_suite",
    "run_all",
]

THRESHOLD_SUITE, RIP_SUITE, COUNT_SUITE = 1, 2, 3


@dataclass
class SuiteReport:
    name: str
    passed: int = 0
    failed: int = 0
    first_failure: Optional[int] = None
    message: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def record(self, case: int, ok: bool, message: str = "") -> None:
        if ok:
            self.passed += 1
            return
        self.failed += 1
        if self.first_failure is None:
            self.first_failure = case
            self.message = message

    def line(self, seed: int) -> str:
        text = f"{self.name}: {self.passed} passed, {self.failed} failed"
        if self.failed:
            text += f" (first failure: --seed {seed} case {self.first_failure}: {self.message})"
        return text


def _rng(seed, suite, case):
    return np.random.default_rng([seed, suite, case])


def random_flat_sparsity(rng, max_d: int = 12, min_blocks: int = 1) -> FlatSparsity:
    while True:
        N = int(rng.integers(min_blocks, max_d + 1))
        n = int(rng.integers(1, max_d // N + 1)) if max_d // N >= 1 else 0
        if n >= 1 and N * n <= max_d:
            break
    return FlatSparsity(N, n, int(rng.integers(1, N + 1)), int(rng.integers(1, n + 1)))


def random_tree(rng, max_leaves: int = 12, max_depth: int = 3) -> SparsityTree:
    """Random uneven tree, completed to uniform leaf depth."""
    budget = [max_leaves]

    def grow(depth):
        if depth == max_depth or budget[0] <= 1 or (depth > 0 and rng.random() < 0.3):
            return TreeNode()
        k = int(rng.integers(1, min(4, budget[0]) + 1))
        budget[0] -= k - 1
        kids = [grow(depth + 1) for _ in range(k)]
        return TreeNode(s=int(rng.integers(1, k + 1)), children=kids)

    while True:
        budget[0] = max_leaves
        root = grow(0)
        if not root.is_leaf:
            return complete_tree(root)


def random_test_vector(rng, d: int) -> np.ndarray:
    """Gaussian, tie-heavy integer, sparse or complex vectors in turn."""
    kind = int(rng.integers(4))
    if kind == 0:
        return rng.standard_normal(d)
    if kind == 1:
        return rng.integers(-2, 3, size=d).astype(float)
    if kind == 2:
        z = rng.standard_normal(d)
        z[rng.random(d) < 0.6] = 0.0
        return z
    return rng.standard_normal(d) + 1j * rng.standard_normal(d)


def threshold_suite(cases: int, seed: int = 0, max_d: int = 12,
                    thresholder: Callable | None = None) -> SuiteReport:
    """Energy of the fast thresholding support equals the brute-force optimum."""
    thresholder = thresholder or support_indices
    report = SuiteReport("threshold-vs-brute-force")
    for case in range(cases):
        rng = _rng(seed, THRESHOLD_SUITE, case)
        sp = random_flat_sparsity(rng, max_d) if rng.random() < 0.5 else random_tree(rng, max_d)
        z = random_test_vector(rng, sp.d)
        omega = thresholder(z, sp)
        best = brute_force_tree(z, sp if isinstance(sp, SparsityTree) else sp.to_tree())
        e = np.abs(z) ** 2
        fast, ref = np.sqrt(e[omega].sum()), np.sqrt(e[best.flatten()].sum())
        marker = np.zeros(sp.d)
        marker[omega] = 1.0
        ok = abs(fast - ref) <= 1e-12 * ref and is_sparse(marker, sp)
        report.record(case, ok, f"{sp!r}: |z_L|={float(fast)!r} vs optimum {float(ref)!r}")
    return report


def _delta_table(a, N, n):
    table = np.zeros((N + 1, n + 1))
    for s in range(1, N + 1):
        for sigma in range(1, n + 1):
            table[s, sigma] = exhaustive_rip(a, FlatSparsity(N, n, s, sigma)).delta_lower
    return table


def rip_structure_suite(matrices: int, seed: int = 0, max_d: int = 16, m_range=(6, 12),
                        samples: int = 1000, tol: float = 1e-10) -> SuiteReport:
    """Monotonicity, nesting, support-union and the two norm characterisations."""
    report = SuiteReport("rip-structure")
    counts = dict.fromkeys(("monotone", "nesting", "union", "rayleigh", "adjoint"), 0)
    for case in range(matrices):
        rng = _rng(seed, RIP_SUITE, case)
        fp0 = random_flat_sparsity(rng, max_d, min_blocks=2)
        while fp0.n < 2:
            fp0 = random_flat_sparsity(rng, max_d, min_blocks=2)
        N, n = fp0.N, fp0.n
        d = N * n
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        a = rng.standard_normal((m, d)) / np.sqrt(m)
        table = _delta_table(a, N, n)
        problems = []

        mono = (np.all(np.diff(table[1:, 1:], axis=0) >= -tol)
                and np.all(np.diff(table[1:, 1:], axis=1) >= -tol))
        counts["monotone"] += 1
        if not mono:
            problems.append("monotonicity")

        s, sigma = int(rng.integers(1, N + 1)), int(rng.integers(1, n + 1))
        unstructured = exhaustive_rip(a, SparsityTree.uniform([(d, s * sigma)])).delta_lower
        counts["nesting"] += 1
        if table[s, sigma] > unstructured + tol:
            problems.append(f"nesting at ({s},{sigma})")

        s1, s2 = rng.integers(1, N + 1, size=2)
        g1, g2 = rng.integers(1, n + 1, size=2)
        om1 = random_support(FlatSparsity(N, n, int(s1), int(g1)), rng)
        om2 = random_support(FlatSparsity(N, n, int(s2), int(g2)), rng)
        union = np.union1d(om1, om2)
        bound = table[min(s1 + s2, N), min(g1 + g2, n)]
        counts["union"] += 1
        if spectral_deviation(a, union) > bound + tol:
            problems.append("support union bound")

        omega = om1
        dev = spectral_deviation(a, omega)
        cols = a[:, omega]
        w, v = np.linalg.eigh(cols.T @ cols)
        extreme = v[:, 0] if abs(w[0] - 1) >= abs(w[-1] - 1) else v[:, -1]
        attained = abs(np.sum((cols @ extreme) ** 2) - 1.0)
        xs = rng.standard_normal((samples, omega.size))
        ratios = np.sum((xs @ cols.T) ** 2, axis=1) / np.sum(xs ** 2, axis=1)
        counts["rayleigh"] += 1
        if np.max(np.abs(ratios - 1.0)) > dev + tol or abs(attained - dev) > 1e-8:
            problems.append("Rayleigh quotient characterisation")

        delta = table[int(s1), int(g1)]
        es = rng.standard_normal((samples, m))
        lhs = np.linalg.norm(es @ cols, axis=1)
        counts["adjoint"] += 1
        if np.any(lhs > np.sqrt(1.0 + delta) * np.linalg.norm(es, axis=1) * (1 + 1e-12)):
            problems.append("adjoint bound")

        report.record(case, not problems, f"N={N} n={n} m={m}: {', '.join(problems)}")
    report.checks = counts
    return report


def _count_by_subsets(sp, size):
    """Independent count: scan all index subsets of the saturated size."""
    from itertools import combinations

    tree = sp if isinstance(sp, SparsityTree) else sp.to_tree()
    hits = 0
    for comb in combinations(range(tree.d), size):
        x = np.zeros(tree.d)
        x[list(comb)] = 1.0
        if is_sparse(x, sp):
            hits += 1
    return hits


def count_suite(cases: int, seed: int = 0, max_d: int = 12) -> SuiteReport:
    """Support-count formulas against enumeration."""
    report = SuiteReport("support-counts")
    for case in range(cases):
        rng = _rng(seed, COUNT_SUITE, case)
        if rng.random() < 0.5:
            sp = random_flat_sparsity(rng, max_d)
            formula = count_flat_supports(sp)
            recursion = count_tree_supports(sp.to_tree())
        else:
            sp = random_tree(rng, max_d)
            formula = recursion = count_tree_supports(sp)
        rows = enumerate_supports(sp)
        distinct = len({tuple(r) for r in rows})
        ok = formula == recursion == rows.shape[0] == distinct
        if ok and isinstance(sp, FlatSparsity):
            ok = _count_by_subsets(sp, sp.s * sp.sigma) == formula
        report.record(case, ok, f"{sp!r}: formula {formula}, recursion {recursion}, "
                                f"enumerated {rows.shape[0]}")
    return report


def run_all(seed: int = 0, cap: int = 12, scale: int = 1,
            thresholder: Callable | None = None) -> list[SuiteReport]:
    return [
        threshold_suite(500 * scale, seed, cap, thresholder),
        rip_structure_suite(20 * scale, seed, max_d=min(16, cap + 4)),
        count_suite(100 * scale, seed, cap),
    ]
