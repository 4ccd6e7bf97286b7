"""Hierarchical sparsity structures, supports and signal helpers.

A sparsity structure is either a :class:`FlatSparsity` (``N`` blocks of
size ``n``, at most ``s`` active blocks with at most ``sigma`` entries
each) or a general :class:`SparsityTree`. Trees are stored level by level:
every vertex is addressed by ``(depth, position)`` where ``position`` counts
vertices of the same depth from the left. Leaves sit at depth
``tree.depth`` and their position is the vector index, so all indexing is
0-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "StructureError",
    "InvalidSupportError",
    "FlatSparsity",
    "SparsityTree",
    "TreeNode",
    "HierarchicalSupport",
    "Sparsity",
    "as_tree",
    "complete_tree",
    "tree_from_edges",
    "flatten_support",
    "support_from_indices",
    "project",
    "is_sparse",
    "as_signal",
    "scale_sparsity",
    "union_sparsity",
    "block_bounds",
]

Vertex = tuple[int, int]


class StructureError(ValueError):
    """Raised for malformed trees (cycles, several parents, bad budgets)."""


class InvalidSupportError(ValueError):
    """Raised when a hierarchical support violates the chain conditions."""


@dataclass(frozen=True)
class FlatSparsity:
    """Two-level ``(s, sigma)`` sparsity on ``N`` blocks of length ``n``."""

    N: int
    n: int
    s: int
    sigma: int

    def __post_init__(self):
        for name in ("N", "n", "s", "sigma"):
            if int(getattr(self, name)) != getattr(self, name):
                raise StructureError(f"{name} must be an integer")
        if self.N < 1 or self.n < 1:
            raise StructureError("N and n must be positive")
        if not 1 <= self.s <= self.N:
            raise StructureError(f"need 1 <= s <= N, got s={self.s}, N={self.N}")
        if not 1 <= self.sigma <= self.n:
            raise StructureError(
                f"need 1 <= sigma <= n, got sigma={self.sigma}, n={self.n}")

    @property
    def d(self) -> int:
        return self.N * self.n

    @property
    def max_support_size(self) -> int:
        return self.s * self.sigma

    def to_tree(self) -> SparsityTree:
        return SparsityTree.uniform([(self.N, self.s), (self.n, self.sigma)])

    def to_json(self) -> dict:
        return {"N": self.N, "n": self.n, "s": self.s, "sigma": self.sigma}


@dataclass
class TreeNode:
    """Mutable nested tree used as input to :func:`complete_tree`.

    A node without children is a leaf; ``s`` is ignored for leaves.
    """

    s: int = 0
    children: list[TreeNode] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @classmethod
    def from_json(cls, obj: Any) -> TreeNode:
        if obj is None:
            return cls()
        if not isinstance(obj, Mapping):
            raise StructureError(f"tree node must be an object, got {type(obj).__name__}")
        children = [cls.from_json(c) for c in obj.get("children", [])]
        if "n" in obj and children and obj["n"] != len(children):
            raise StructureError(
                f"node declares n={obj['n']} but has {len(children)} children")
        s = int(obj.get("s", 0))
        return cls(s=s, children=children)

    def to_json(self) -> dict:
        return {"n": len(self.children), "s": self.s if self.children else 0,
                "children": [c.to_json() for c in self.children]}


class SparsityTree:
    """Rooted ordered tree with uniform leaf depth and per-vertex budgets.

    Parameters
    ----------
    levels : sequence of sequences of ``(n, s)`` pairs
        ``levels[j][p]`` holds child count and sparsity budget of the vertex
        at depth ``j`` and position ``p``. The number of entries on level
        ``j + 1`` must equal the total child count on level ``j``.
    """

    def __init__(self, levels: Sequence[Sequence[tuple[int, int]]]):
        if not levels:
            raise StructureError("a sparsity tree needs at least one internal level")
        lv = []
        expected = 1
        for j, level in enumerate(levels):
            level = tuple((int(n), int(s)) for n, s in level)
            if len(level) != expected:
                raise StructureError(
                    f"level {j} has {len(level)} vertices, expected {expected}")
            for p, (n, s) in enumerate(level):
                if n < 1:
                    raise StructureError(f"internal vertex ({j},{p}) needs children")
                if not 1 <= s <= n:
                    raise StructureError(
                        f"vertex ({j},{p}) has budget s={s} outside [1, n={n}]")
            lv.append(level)
            expected = sum(n for n, _ in level)
        self._levels = tuple(lv)
        self._n = [np.array([n for n, _ in level], dtype=np.intp) for level in lv]
        self._s = [np.array([s for _, s in level], dtype=np.intp) for level in lv]
        # _offsets[j][p]: position of the first child of (j, p) on level j + 1
        self._offsets = [np.concatenate(([0], np.cumsum(n)[:-1])) for n in self._n]

    @classmethod
    def uniform(cls, shape: Sequence[tuple[int, int]]) -> SparsityTree:
        """Tree where every vertex at depth ``i`` has ``n_i`` children and budget ``s_i``."""
        levels = []
        count = 1
        for n, s in shape:
            levels.append([(n, s)] * count)
            count *= n
        return cls(levels)

    @property
    def levels(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        return self._levels

    @property
    def depth(self) -> int:
        return len(self._levels)

    @property
    def d(self) -> int:
        return int(self._n[-1].sum())

    @property
    def root(self) -> Vertex:
        return (0, 0)

    def n_of(self, v: Vertex) -> int:
        depth, pos = v
        if depth == self.depth:
            return 0
        return int(self._n[depth][pos])

    def s_of(self, v: Vertex) -> int:
        depth, pos = v
        if depth == self.depth:
            return 0
        return int(self._s[depth][pos])

    def children(self, v: Vertex) -> list[Vertex]:
        depth, pos = v
        if depth == self.depth:
            return []
        start = int(self._offsets[depth][pos])
        return [(depth + 1, start + i) for i in range(int(self._n[depth][pos]))]

    def child(self, v: Vertex, i: int) -> Vertex:
        depth, pos = v
        return (depth + 1, int(self._offsets[depth][pos]) + i)

    def vertices(self, depth: int) -> list[Vertex]:
        count = 1 if depth == 0 else int(self._n[depth - 1].sum())
        return [(depth, p) for p in range(count)]

    def level_arrays(self, depth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Child counts, budgets and child offsets of all vertices at ``depth``."""
        return self._n[depth], self._s[depth], self._offsets[depth]

    @cached_property
    def uniform_shape(self) -> tuple[tuple[int, int], ...] | None:
        """``((n_0, s_0), ...)`` when every level is uniform, else ``None``."""
        shape = []
        for level in self._levels:
            if any(v != level[0] for v in level):
                return None
            shape.append(level[0])
        return tuple(shape)

    def to_node(self) -> TreeNode:
        def build(v):
            if v[0] == self.depth:
                return TreeNode()
            return TreeNode(s=self.s_of(v), children=[build(c) for c in self.children(v)])
        return build(self.root)

    def to_json(self) -> dict:
        return self.to_node().to_json()

    @classmethod
    def from_json(cls, obj: Any) -> SparsityTree:
        return complete_tree(TreeNode.from_json(obj))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def __eq__(self, other):
        return isinstance(other, SparsityTree) and self._levels == other._levels

    def __hash__(self):
        return hash(self._levels)

    def __repr__(self):
        if self.uniform_shape is not None:
            return f"SparsityTree.uniform({list(self.uniform_shape)})"
        return f"SparsityTree(depth={self.depth}, d={self.d})"


Sparsity = Union[FlatSparsity, SparsityTree]


def as_tree(sp: Sparsity) -> SparsityTree:
    if isinstance(sp, SparsityTree):
        return sp
    if isinstance(sp, FlatSparsity):
        return sp.to_tree()
    raise TypeError(f"expected FlatSparsity or SparsityTree, got {type(sp).__name__}")


def _leaf_depths(node: TreeNode, depth: int = 0) -> Iterable[int]:
    if node.is_leaf:
        yield depth
    else:
        for c in node.children:
            yield from _leaf_depths(c, depth + 1)


def complete_tree(tree: TreeNode | SparsityTree | Mapping) -> SparsityTree:
    """Extend shallow leaves by chains of only children until all leaves share one depth.

    Chain vertices get ``n = s = 1``. Leaf order (left to right) is preserved,
    and a tree that is already a :class:`SparsityTree` is returned unchanged.
    """
    if isinstance(tree, SparsityTree):
        return tree
    if isinstance(tree, Mapping) or tree is None:
        tree = TreeNode.from_json(tree)
    if tree.is_leaf:
        raise StructureError("the root must have at least one child")
    depth = max(_leaf_depths(tree))

    levels: list[list[tuple[int, int]]] = [[] for _ in range(depth)]
    frontier: list[tuple[TreeNode, int]] = [(tree, 0)]
    for j in range(depth):
        nxt = []
        for node, d0 in frontier:
            if node.is_leaf:
                # leaf reached early: pad with a chain vertex
                levels[j].append((1, 1))
                nxt.append((node, d0 + 1))
            else:
                levels[j].append((len(node.children), node.s))
                nxt.extend((c, d0 + 1) for c in node.children)
        frontier = nxt
    return SparsityTree(levels)


def tree_from_edges(children: Mapping[Any, Sequence[Any]], budgets: Mapping[Any, int],
                    root: Any) -> SparsityTree:
    """Build and complete a tree from an adjacency map ``vertex -> ordered children``.

    Raises :class:`StructureError` on cycles, vertices with several parents
    or unreachable vertices.
    """
    parent: dict[Any, Any] = {}
    for v, cs in children.items():
        for c in cs:
            if c == root:
                raise StructureError(f"root {root!r} appears as a child of {v!r}")
            if c in parent:
                raise StructureError(f"vertex {c!r} has several parents "
                                     f"({parent[c]!r} and {v!r})")
            parent[c] = v

    seen = set()

    def build(v):
        if v in seen:
            raise StructureError(f"cycle through vertex {v!r}")
        seen.add(v)
        cs = children.get(v, ())
        if not cs:
            return TreeNode()
        if v not in budgets:
            raise StructureError(f"internal vertex {v!r} has no sparsity budget")
        return TreeNode(s=int(budgets[v]), children=[build(c) for c in cs])

    node = build(root)
    orphans = (set(children) | set(parent)) - seen
    if orphans:
        raise StructureError(f"vertices not reachable from the root: {sorted(map(str, orphans))}")
    return complete_tree(node)


@dataclass(frozen=True)
class HierarchicalSupport:
    """Per-vertex selection of active children.

    ``selection`` is a sorted tuple of ``((depth, position), children)``
    entries, ``children`` being sorted local child indices. Vertices without
    an entry select nothing. Construction checks budgets and the chain
    conditions, so every instance is a valid sparse support.
    """

    sparsity: Sparsity
    selection: tuple[tuple[Vertex, tuple[int, ...]], ...]

    def __post_init__(self):
        sel = tuple(sorted((tuple(v), tuple(sorted(int(i) for i in c)))
                           for v, c in self.selection if len(c)))
        object.__setattr__(self, "selection", sel)
        _validate(self)

    @classmethod
    def from_mapping(cls, sparsity: Sparsity,
                     selected: Mapping[Vertex, Iterable[int]]) -> HierarchicalSupport:
        return cls(sparsity, tuple((v, tuple(c)) for v, c in selected.items()))

    @cached_property
    def _lookup(self) -> dict[Vertex, tuple[int, ...]]:
        return dict(self.selection)

    @property
    def tree(self) -> SparsityTree:
        return as_tree(self.sparsity)

    def selected(self, v: Vertex) -> tuple[int, ...]:
        return self._lookup.get(tuple(v), ())

    def flatten(self) -> np.ndarray:
        return flatten_support(self)

    def to_json(self) -> dict:
        return {"selected": [{"vertex": list(v), "children": list(c)}
                             for v, c in self.selection]}

    @classmethod
    def from_json(cls, sparsity: Sparsity, obj: Mapping) -> HierarchicalSupport:
        return cls(sparsity, tuple((tuple(e["vertex"]), tuple(e["children"]))
                                   for e in obj["selected"]))


def _validate(hs: HierarchicalSupport) -> None:
    tree = hs.tree
    active = {tree.root}
    for v, chosen in hs.selection:
        depth, pos = v
        if depth >= tree.depth or pos >= len(tree.vertices(depth)):
            raise InvalidSupportError(f"vertex {v} is not an internal vertex")
        n, s = tree.n_of(v), tree.s_of(v)
        if chosen[-1] >= n or chosen[0] < 0:
            raise InvalidSupportError(f"vertex {v} selects children {chosen} out of range [0,{n})")
        if len(chosen) > s:
            raise InvalidSupportError(
                f"vertex {v} selects {len(chosen)} children, budget is {s}")
    # selection is sorted by depth, so parents are processed first
    for v, chosen in hs.selection:
        if v not in active:
            raise InvalidSupportError(f"vertex {v} selects children but is not active")
        for i in chosen:
            active.add(tree.child(v, i))
    lookup = hs._lookup
    for v in active:
        if v != tree.root and v[0] < tree.depth and v not in lookup:
            raise InvalidSupportError(f"active vertex {v} has an empty selection")


def flatten_support(hs: HierarchicalSupport) -> np.ndarray:
    """Sorted leaf indices of the active leaves of ``hs``."""
    tree = hs.tree
    frontier = [tree.root]
    for _ in range(tree.depth):
        nxt = []
        for v in frontier:
            nxt.extend(tree.child(v, i) for i in hs.selected(v))
        frontier = nxt
    return np.array(sorted(p for _, p in frontier), dtype=np.intp)


def support_from_indices(sparsity: Sparsity, omega: Iterable[int]) -> HierarchicalSupport:
    """Canonical hierarchical support whose active leaves are ``omega``.

    Raises :class:`InvalidSupportError` when ``omega`` does not fit the budgets.
    """
    tree = as_tree(sparsity)
    omega = np.unique(np.asarray(list(omega), dtype=np.intp))
    if omega.size and (omega[0] < 0 or omega[-1] >= tree.d):
        raise IndexError(f"support index out of range [0, {tree.d})")
    mask = np.zeros(tree.d, dtype=bool)
    mask[omega] = True
    selected = {}
    for depth in range(tree.depth - 1, -1, -1):
        n, _, off = tree.level_arrays(depth)
        parent_mask = np.zeros(len(n), dtype=bool)
        for p in range(len(n)):
            local = np.flatnonzero(mask[off[p]:off[p] + n[p]])
            if local.size:
                selected[(depth, p)] = tuple(int(i) for i in local)
                parent_mask[p] = True
        mask = parent_mask
    return HierarchicalSupport.from_mapping(sparsity, selected)


def as_signal(x, field: str | None = None) -> np.ndarray:
    """Validate ``x`` as a finite 1-D real or complex vector."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError(f"signal must be one-dimensional, got shape {x.shape}")
    if np.iscomplexobj(x):
        x = x.astype(np.complex128, copy=False)
        if field == "real":
            raise TypeError("complex signal where a real one is required")
    else:
        x = x.astype(np.float64, copy=False)
        if field == "complex":
            x = x.astype(np.complex128)
    if not np.all(np.isfinite(x)):
        raise ValueError("signal has non-finite entries")
    return x


def project(x, omega) -> np.ndarray:
    """Keep the entries of ``x`` on ``omega`` and zero the rest."""
    x = np.asarray(x)
    omega = np.asarray(omega, dtype=np.intp).reshape(-1)
    if omega.size and (omega.min() < 0 or omega.max() >= x.shape[0]):
        raise IndexError(f"support index out of range [0, {x.shape[0]})")
    out = np.zeros_like(x)
    out[omega] = x[omega]
    return out


def is_sparse(x, sparsity: Sparsity) -> bool:
    """True when the support of ``x`` fits the hierarchical budgets."""
    x = np.asarray(x)
    tree = as_tree(sparsity)
    if x.shape != (tree.d,):
        raise ValueError(f"signal has shape {x.shape}, sparsity expects ({tree.d},)")
    if isinstance(sparsity, FlatSparsity):
        nz = (x != 0).reshape(sparsity.N, sparsity.n)
        per_block = nz.sum(axis=1)
        return bool(per_block.max() <= sparsity.sigma
                    and np.count_nonzero(per_block) <= sparsity.s)
    active = x != 0
    for depth in range(tree.depth - 1, -1, -1):
        n, s, off = tree.level_arrays(depth)
        counts = np.add.reduceat(active.astype(np.intp), off)
        if np.any(counts > s):
            return False
        active = counts > 0
    return True


def block_bounds(sparsity: Sparsity) -> np.ndarray:
    """Start offsets of the innermost blocks (sibling groups of leaves), plus ``d``."""
    if isinstance(sparsity, FlatSparsity):
        return np.arange(0, sparsity.d + 1, sparsity.n)
    tree = as_tree(sparsity)
    n, _, off = tree.level_arrays(tree.depth - 1)
    return np.append(off, tree.d)


def scale_sparsity(sparsity: Sparsity, q: int) -> Sparsity:
    """Multiply every budget by ``q``, clamped to the number of children."""
    if isinstance(sparsity, FlatSparsity):
        return FlatSparsity(sparsity.N, sparsity.n, min(q * sparsity.s, sparsity.N),
                            min(q * sparsity.sigma, sparsity.n))
    levels = [[(n, min(q * s, n)) for n, s in level] for level in sparsity.levels]
    return SparsityTree(levels)


def union_sparsity(a: FlatSparsity, b: FlatSparsity) -> FlatSparsity:
    """Smallest flat class containing every union of an ``a``- and a ``b``-sparse support."""
    if (a.N, a.n) != (b.N, b.n):
        raise ValueError("sparsities live on different block structures")
    return FlatSparsity(a.N, a.n, min(a.s + b.s, a.N), min(a.sigma + b.sigma, a.n))
