"""Welfare machinery on top of the exchange-graph kernel.

Provides the best-achievable ("pooled") utility of a subtree, the
exchange-graph view of an allocation with shortest transfer paths and path
augmentation, and the one-level weighted swap loop that both solvers are
assembled from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from ._kernel import (
    NonRedundancyError,
    engine_class,
    iter_bits,
    mask_of,
)
from ._kernel import descriptor_rank as _selected_rank
from .fairness import FairnessCriterion, lex_dominates
from .model import (
    POOL,
    ROOT,
    LocalAllocation,
    MultilevelAllocation,
    Tree,
)
from .valuations import Valuation

__all__ = [
    "ExchangeGraph",
    "GroupValuation",
    "MalformedPathError",
    "NonRedundancyError",
    "TransferPath",
    "YankeeSwapResult",
    "achievable_utility",
    "path_augment",
    "proxy_valuation",
    "shortest_transfer_path",
    "yankee_swap",
]


class MalformedPathError(ValueError):
    """A transfer path violates the exchange-graph edge conditions."""


@dataclass(frozen=True)
class GroupValuation(Valuation):
    """Several concrete valuations acting as one agent.

    The value of a bundle is the best utilitarian split of the bundle among
    the members; this is again a matroid rank function, which is what lets
    an internal tree node stand in for its subtree during local division.
    """

    members: tuple[Valuation, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("a group needs at least one member")

    def evaluate(self, bundle: Iterable[int]) -> int:
        return _selected_rank(self.kernel_descriptor(), mask_of(bundle))

    def kernel_descriptor(self) -> tuple:
        return ("group", tuple(v.kernel_descriptor() for v in self.members))


def proxy_valuation(tree: Tree, valuations: Mapping[int, Valuation], node: int) -> Valuation:
    """The valuation a node presents to its parent's division step: its own
    valuation for a leaf, the pooled subtree valuation otherwise."""
    if tree.is_leaf(node):
        return valuations[node]
    return GroupValuation(tuple(valuations[leaf] for leaf in tree.subtree_leaves(node)))


def achievable_utility(
    tree: Tree, valuations: Mapping[int, Valuation], node: int, items: Iterable[int]
) -> int:
    """Largest total utility the leaves under `node` can extract from `items`."""
    return proxy_valuation(tree, valuations, node).evaluate(items)


@dataclass(frozen=True)
class TransferPath:
    """Exchange path: `leaf` absorbs the first item, every item's owner takes
    over the next one, the final item's owner releases it."""

    leaf: int
    items: tuple[int, ...]


class ExchangeGraph:
    """Item-level exchange structure of a non-redundant allocation.

    Vertices are the items held by leaves plus the unheld ("pool") items of
    the root bundle.  There is an edge g -> g' when the holder of g could
    swap g for g' without losing utility (always true for pool items), and
    g' has a different holder.
    """

    def __init__(
        self,
        tree: Tree,
        valuations: Mapping[int, Valuation],
        alloc: MultilevelAllocation,
        backend: Optional[str] = None,
    ):
        self.tree = tree
        self._leaves = tree.leaves
        self._index = {leaf: i for i, leaf in enumerate(self._leaves)}
        universe = alloc.bundle(ROOT)
        bundles = [mask_of(alloc.bundle(leaf)) for leaf in self._leaves]
        held = 0
        for b in bundles:
            held |= b
        pool = mask_of(universe) & ~held
        m = max((g for g in universe), default=-1) + 1
        self.engine = engine_class(backend)(
            m, [valuations[leaf].kernel_descriptor() for leaf in self._leaves]
        )
        self.engine.load(bundles, pool)

    def holder(self, g: int) -> int:
        """Leaf holding item g, or the pool id 0."""
        a = self.engine.owner_of(g)
        if a == -2:
            raise ValueError(f"item {g} is not in the allocation")
        return POOL if a == -1 else self._leaves[a]

    def edge(self, g: int, g2: int) -> bool:
        a = self.engine.owner_of(g)
        b = self.engine.owner_of(g2)
        if a == -2 or b == -2 or a == b:
            return False
        if a == -1:
            return True
        return self.engine.exchange_ok(a, g, g2)

    def positive_gain_items(self, leaf: int) -> frozenset[int]:
        """Items whose addition would raise the leaf's utility."""
        return frozenset(iter_bits(self.engine.f_mask(self._index[leaf])))

    def shortest_path_from(self, leaf: int, targets: Iterable[int]) -> Optional[TransferPath]:
        path = self.engine.shortest_path(self._index[leaf], mask_of(targets))
        if path is None:
            return None
        return TransferPath(leaf, tuple(path))


def shortest_transfer_path(
    tree: Tree,
    valuations: Mapping[int, Valuation],
    alloc: MultilevelAllocation,
    leaf: int,
    targets: Iterable[int],
    backend: Optional[str] = None,
) -> Optional[TransferPath]:
    """Shortest exchange path from `leaf`'s gain set to any target item.

    The allocation must be non-redundant (every leaf bundle fully used);
    ties break toward shallower paths, then lower item ids.
    """
    if not tree.is_leaf(leaf):
        raise ValueError(f"node {leaf} is not a leaf")
    return ExchangeGraph(tree, valuations, alloc, backend).shortest_path_from(leaf, targets)


def _closure(tree: Tree, node: int) -> frozenset[int]:
    if node == POOL:
        return frozenset((POOL, ROOT))
    return frozenset(tree.ancestors(node)) | {node}


def apply_move(
    tree: Tree, bundles: Mapping[int, set], g: int, frm: int, to: int
) -> None:
    """Move item g between a leaf (or the pool) and another, updating every
    ancestor bundle that the endpoints do not share."""
    up = _closure(tree, frm)
    down = _closure(tree, to)
    for i in down - up:
        bundles[i].add(g)
    for i in up - down:
        bundles[i].discard(g)


def path_augment(
    tree: Tree,
    valuations: Mapping[int, Valuation],
    alloc: MultilevelAllocation,
    path: TransferPath,
) -> MultilevelAllocation:
    """Apply a transfer path to an allocation, returning the new allocation.

    Every edge is re-validated against the leaf valuations; a path that is
    not a chain of utility-preserving swaps raises MalformedPathError.
    Ancestor bundles along the two endpoints' root paths are adjusted so the
    result satisfies the structural invariants again.
    """
    items = path.items
    x = path.leaf
    if not items:
        raise MalformedPathError("empty path")
    if len(set(items)) != len(items):
        raise MalformedPathError("path repeats an item")
    if not tree.is_leaf(x):
        raise MalformedPathError(f"node {x} is not a leaf")

    holder = {}
    for leaf in tree.leaves:
        for g in alloc.bundle(leaf):
            holder[g] = leaf
    for g in alloc.bundle(ROOT):
        holder.setdefault(g, POOL)
    for g in items:
        if g not in holder:
            raise MalformedPathError(f"item {g} is not in the allocation")

    first = items[0]
    if first in alloc.bundle(x):
        raise MalformedPathError(f"leaf {x} already holds item {first}")
    if valuations[x].marginal(alloc.bundle(x), first) != 1:
        raise MalformedPathError(f"item {first} does not raise leaf {x}'s utility")
    for g, g2 in zip(items, items[1:]):
        y = holder[g]
        if holder[g2] == y:
            raise MalformedPathError(f"items {g} and {g2} have the same holder")
        if y == POOL:
            continue
        bundle = alloc.bundle(y)
        swapped = (bundle - {g}) | {g2}
        if valuations[y].evaluate(swapped) != valuations[y].evaluate(bundle):
            raise MalformedPathError(f"leaf {y} cannot swap item {g} for {g2}")

    bundles = {i: set(alloc.bundle(i)) for i in tree.node_ids}
    bundles[POOL] = set(alloc.pool)
    moves = [(items[0], holder[items[0]], x)]
    for i in range(1, len(items)):
        moves.append((items[i], holder[items[i]], holder[items[i - 1]]))
    for g, frm, to in moves:
        apply_move(tree, bundles, g, frm, to)
    return MultilevelAllocation.from_mapping(
        tree.n, {i: bundles[i] for i in tree.node_ids}, pool=bundles[POOL]
    )


@dataclass(frozen=True)
class YankeeSwapResult:
    allocation: LocalAllocation
    iterations: int


def yankee_swap(
    nodes: Sequence[int],
    weights: Sequence,
    valuations: Sequence[Valuation],
    items: Iterable[int],
    criterion: FairnessCriterion,
    m: int,
    backend: Optional[str] = None,
) -> YankeeSwapResult:
    """One-level fair division of `items` among sibling agents.

    Starting from empty bundles, repeatedly serve the agent whose gain
    vector under `criterion` is lexicographically largest (ties to the
    earliest listed agent): either augment it along a shortest transfer path
    ending in the pool, or retire it when no path exists.  Every kept bundle
    is non-redundant, total utility is maximal, and the utility profile is
    optimal for the criterion when the valuations are matroid ranks.
    """
    nodes = tuple(nodes)
    items = frozenset(items)
    k = len(nodes)
    if len(weights) != k or len(valuations) != k:
        raise ValueError("nodes, weights and valuations must align")
    engine = engine_class(backend)(m, [v.kernel_descriptor() for v in valuations])
    engine.load([0] * k, mask_of(items))
    active = list(range(k))
    iterations = 0
    while active:
        best = None
        best_gain = None
        for idx in active:
            gv = criterion.gain(engine.utility(idx), weights[idx], nodes[idx])
            if best is None or lex_dominates(gv, best_gain):
                best, best_gain = idx, gv
        path = engine.shortest_path(best, engine.pool_mask())
        if path is None:
            active.remove(best)
        else:
            engine.augment(best, path)
        iterations += 1
    shares = tuple(frozenset(iter_bits(engine.bundle_mask(i))) for i in range(k))
    return YankeeSwapResult(LocalAllocation(nodes, shares, items), iterations)
