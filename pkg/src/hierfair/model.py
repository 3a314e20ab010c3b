"""Agent hierarchies and allocations over them.

Agents form an arborescence: node 1 is the root, every other node has a
single parent with a smaller id, leaves are the concrete item consumers.
An allocation maps every node to a bundle of items; index 0 is reserved for
the pool of currently unallocated items that the multilevel swap solver
keeps attached to the root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

POOL = 0
ROOT = 1


class TreeError(ValueError):
    """The node table does not describe a valid agent hierarchy."""


class Tree:
    """Rooted hierarchy with per-node weights and per-internal-node fairness tags.

    Parameters
    ----------
    parent : mapping from every non-root node id to its parent id.
        Ids must be exactly 1..n with parent(i) < i (topological numbering,
        which also rules out cycles and a second root).
    weights : optional mapping node id -> positive weight (int or Fraction).
        Missing nodes default to weight 1.
    criteria : mapping internal node id -> fairness criterion.
        Exactly the internal nodes must be tagged; leaves carry none.
    """

    __slots__ = (
        "n",
        "_parent",
        "_children",
        "_weight",
        "_criterion",
        "_subtree_leaves",
        "_ancestors",
    )

    def __init__(
        self,
        parent: Mapping[int, int],
        weights: Optional[Mapping[int, object]] = None,
        criteria: Optional[Mapping[int, object]] = None,
    ):
        n = max(parent, default=1)
        ids = set(parent)
        if ROOT in ids:
            raise TreeError("root node 1 cannot have a parent")
        if ids != set(range(2, n + 1)):
            raise TreeError("node ids must be exactly 1..n")
        self.n = n
        self._parent = [None, None] + [parent[i] for i in range(2, n + 1)]
        self._children: list[tuple[int, ...]] = [()] * (n + 1)
        kids: list[list[int]] = [[] for _ in range(n + 1)]
        for i in range(2, n + 1):
            p = self._parent[i]
            if not 1 <= p < i:
                raise TreeError(f"parent of node {i} must be an earlier node, got {p}")
            kids[p].append(i)
        for i in range(1, n + 1):
            self._children[i] = tuple(kids[i])

        self._weight = [None] + [Fraction(1)] * n
        for i, w in (weights or {}).items():
            if not 1 <= i <= n:
                raise TreeError(f"weight given for unknown node {i}")
            w = Fraction(w)
            if w <= 0:
                raise TreeError(f"weight of node {i} must be positive, got {w}")
            self._weight[i] = w

        internal = {i for i in range(1, n + 1) if self._children[i]}
        criteria = dict(criteria or {})
        if set(criteria) != internal:
            missing = internal - set(criteria)
            extra = set(criteria) - internal
            raise TreeError(
                f"criteria must tag exactly the internal nodes "
                f"(missing {sorted(missing)}, extra {sorted(extra)})"
            )
        self._criterion = criteria

        self._subtree_leaves: list[tuple[int, ...]] = [()] * (n + 1)
        for i in range(n, 0, -1):
            if not self._children[i]:
                self._subtree_leaves[i] = (i,)
            else:
                acc: list[int] = []
                for c in self._children[i]:
                    acc.extend(self._subtree_leaves[c])
                self._subtree_leaves[i] = tuple(sorted(acc))

        self._ancestors: list[tuple[int, ...]] = [()] * (n + 1)
        for i in range(2, n + 1):
            p = self._parent[i]
            self._ancestors[i] = self._ancestors[p] + (p,)

    # -- structure ----------------------------------------------------------

    @property
    def node_ids(self) -> range:
        return range(1, self.n + 1)

    def parent(self, i: int) -> Optional[int]:
        return self._parent[i]

    def children(self, i: int) -> tuple[int, ...]:
        return self._children[i]

    def is_leaf(self, i: int) -> bool:
        return not self._children[i]

    @property
    def leaves(self) -> tuple[int, ...]:
        return self._subtree_leaves[ROOT] if self.n > 1 else (ROOT,)

    @property
    def internal_nodes(self) -> tuple[int, ...]:
        return tuple(i for i in self.node_ids if self._children[i])

    def subtree_leaves(self, i: int) -> tuple[int, ...]:
        """Leaves of the subtree rooted at i (i itself when i is a leaf)."""
        return self._subtree_leaves[i]

    def ancestors(self, i: int) -> tuple[int, ...]:
        """Proper ancestors of i, listed root first."""
        return self._ancestors[i]

    def weight(self, i: int) -> Fraction:
        return self._weight[i]

    def criterion(self, i: int):
        """Fairness criterion of internal node i (KeyError for leaves)."""
        return self._criterion[i]

    def __repr__(self) -> str:
        return f"Tree(n={self.n}, leaves={len(self.leaves)})"


@dataclass(frozen=True)
class MultilevelAllocation:
    """Immutable node -> bundle map; ``bundles[0]`` is the unallocated pool."""

    bundles: tuple[frozenset[int], ...]

    @classmethod
    def from_mapping(
        cls,
        n: int,
        mapping: Mapping[int, Iterable[int]],
        pool: Iterable[int] = (),
    ) -> "MultilevelAllocation":
        rows = [frozenset(pool)] + [frozenset(mapping.get(i, ())) for i in range(1, n + 1)]
        return cls(tuple(rows))

    def bundle(self, i: int) -> frozenset[int]:
        return self.bundles[i]

    @property
    def pool(self) -> frozenset[int]:
        return self.bundles[POOL]

    @property
    def n(self) -> int:
        return len(self.bundles) - 1

    def replace(self, i: int, new_bundle: Iterable[int]) -> "MultilevelAllocation":
        rows = list(self.bundles)
        rows[i] = frozenset(new_bundle)
        return MultilevelAllocation(tuple(rows))


@dataclass(frozen=True)
class LocalAllocation:
    """A one-level split of a source bundle among sibling nodes.

    Shares must be disjoint subsets of the source; anything left over is
    reported by :attr:`unallocated`.
    """

    nodes: tuple[int, ...]
    shares: tuple[frozenset[int], ...]
    source: frozenset[int]

    def __post_init__(self):
        if len(self.nodes) != len(self.shares):
            raise ValueError("one share per node required")
        seen: set[int] = set()
        for node, share in zip(self.nodes, self.shares):
            if not share <= self.source:
                raise ValueError(f"share of node {node} is not within the source bundle")
            if seen & share:
                raise ValueError(f"share of node {node} overlaps a sibling share")
            seen |= share
        object.__setattr__(self, "shares", tuple(frozenset(s) for s in self.shares))

    def share_of(self, node: int) -> frozenset[int]:
        return self.shares[self.nodes.index(node)]

    @property
    def unallocated(self) -> frozenset[int]:
        out = set(self.source)
        for share in self.shares:
            out -= share
        return frozenset(out)


@dataclass(frozen=True)
class AllocationViolation:
    code: str
    nodes: tuple[int, ...]
    detail: str


@dataclass(frozen=True)
class AllocationReport:
    ok: bool
    violations: tuple[AllocationViolation, ...]


def validate_allocation(
    tree: Tree,
    alloc: MultilevelAllocation,
    m: int,
    fold_pool: bool = False,
) -> AllocationReport:
    """Check the structural allocation invariants.

    The root must own the full item set 0..m-1, every internal bundle must
    cover its children's bundles, and sibling bundles must be pairwise
    disjoint.  With ``fold_pool`` the pool (node 0) is treated as an extra
    child of the root, which is how the multilevel swap solver maintains its
    intermediate states.
    """
    violations: list[AllocationViolation] = []
    universe = frozenset(range(m))
    if alloc.n != tree.n:
        raise ValueError(f"allocation indexes {alloc.n} nodes, tree has {tree.n}")
    if alloc.bundle(ROOT) != universe:
        violations.append(
            AllocationViolation(
                "root-owns-all",
                (ROOT,),
                f"root bundle has {len(alloc.bundle(ROOT))} of {m} items",
            )
        )
    for i in tree.node_ids:
        if not alloc.bundle(i) <= universe:
            violations.append(
                AllocationViolation("unknown-items", (i,), f"node {i} holds items outside 0..{m - 1}")
            )
    if not alloc.pool <= universe:
        violations.append(
            AllocationViolation("unknown-items", (POOL,), "pool holds items outside the universe")
        )
    for i in tree.internal_nodes:
        groups = [(c, alloc.bundle(c)) for c in tree.children(i)]
        if fold_pool and i == ROOT:
            groups.append((POOL, alloc.pool))
        covered: set[int] = set()
        for a in range(len(groups)):
            ca, ba = groups[a]
            if not ba <= alloc.bundle(i):
                violations.append(
                    AllocationViolation(
                        "child-subset", (i, ca), f"node {ca} holds items its parent {i} does not"
                    )
                )
            for b in range(a + 1, len(groups)):
                cb, bb = groups[b]
                if ba & bb:
                    violations.append(
                        AllocationViolation(
                            "sibling-disjointness",
                            (ca, cb),
                            f"nodes {ca} and {cb} share items {sorted(ba & bb)}",
                        )
                    )
            covered |= ba
    return AllocationReport(not violations, tuple(violations))


def restrict(tree: Tree, alloc: MultilevelAllocation, nodes: Sequence[int]) -> LocalAllocation:
    """View the bundles of `nodes` as a local allocation.

    When the nodes are exactly the children of one internal node the parent's
    bundle is the source; otherwise the root bundle is used.
    """
    nodes = tuple(nodes)
    for i in nodes:
        if not 1 <= i <= tree.n:
            raise ValueError(f"unknown node id {i}")
    source = alloc.bundle(ROOT)
    if nodes:
        p = tree.parent(nodes[0])
        if p is not None and set(nodes) == set(tree.children(p)):
            source = alloc.bundle(p)
    return LocalAllocation(nodes, tuple(alloc.bundle(i) for i in nodes), source)


def node_utility(tree: Tree, valuations: Mapping[int, object], alloc: MultilevelAllocation, i: int) -> int:
    """Realized utility of node i: leaf valuation, or the sum over children."""
    if tree.is_leaf(i):
        return valuations[i].evaluate(alloc.bundle(i))
    return sum(node_utility(tree, valuations, alloc, c) for c in tree.children(i))


def utility_profile(
    tree: Tree, valuations: Mapping[int, object], alloc: MultilevelAllocation, nodes: Sequence[int]
) -> tuple[int, ...]:
    return tuple(node_utility(tree, valuations, alloc, i) for i in nodes)


def _descriptor_max_item(descriptor: tuple) -> int:
    kind = descriptor[0]
    if kind in ("binary", "capped"):
        return descriptor[1].bit_length() - 1
    if kind == "uniform":
        return -1
    if kind == "assignment":
        return max((m.bit_length() - 1 for m in descriptor[1]), default=-1)
    if kind == "group":
        return max((_descriptor_max_item(d) for d in descriptor[1]), default=-1)
    raise ValueError(f"unknown descriptor kind {kind!r}")


@dataclass(frozen=True)
class Instance:
    """A full problem: hierarchy, item count, and one valuation per leaf."""

    tree: Tree
    m: int
    valuations: Mapping[int, object]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.tree.n < 2:
            raise ValueError("an instance needs a root plus at least one leaf")
        if self.m < 0:
            raise ValueError("item count must be non-negative")
        leaves = set(self.tree.leaves)
        if set(self.valuations) != leaves:
            raise ValueError("exactly the leaves must carry valuations")
        for leaf, val in self.valuations.items():
            top = _descriptor_max_item(val.kernel_descriptor())
            if top >= self.m:
                raise ValueError(
                    f"valuation of leaf {leaf} references item {top}, "
                    f"universe has {self.m}"
                )

    @property
    def items(self) -> frozenset[int]:
        return frozenset(range(self.m))


@dataclass(frozen=True)
class SolveResult:
    """Outcome of a solver run."""

    algorithm: str
    allocation: MultilevelAllocation
    iterations: int
    trace: Optional[tuple] = None
