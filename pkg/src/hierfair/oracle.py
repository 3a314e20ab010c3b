"""Exhaustive ground truth for small instances.

Everything here is mechanically independent of the exchange-graph kernel:
utilities come straight from the reference valuations, best splits from
explicit enumeration, and best-achievable subtree utilities from subset
max-convolution tables.  The solvers are tested against these answers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .model import Instance, LocalAllocation, MultilevelAllocation, node_utility

__all__ = [
    "OracleBudgetExceeded",
    "OracleVerdict",
    "achievable_table",
    "best_achievable",
    "best_local_split",
    "check_allocation",
    "enumerate_local",
]

DEFAULT_BUDGET = 10_000_000


class OracleBudgetExceeded(RuntimeError):
    """The requested enumeration is larger than the allowed budget."""


def _splits(items: Sequence[int], k: int) -> Iterator[list[int]]:
    """Yield every split of `items` into k shares plus a leftover mask.

    Each yielded list has k+1 masks: index 0 is the unallocated part, index
    j the share of the j-th node.  Runs as an odometer over per-item
    choices, so splits appear exactly once, in a fixed order.
    """
    t = len(items)
    digits = [0] * t
    while True:
        masks = [0] * (k + 1)
        for pos in range(t):
            masks[digits[pos]] |= 1 << items[pos]
        yield masks
        pos = 0
        while pos < t and digits[pos] == k:
            digits[pos] = 0
            pos += 1
        if pos == t:
            return
        digits[pos] += 1


def _bits(mask: int) -> frozenset[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return frozenset(out)


def enumerate_local(
    items: Iterable[int], nodes: Sequence[int], budget: int = DEFAULT_BUDGET
) -> Iterator[LocalAllocation]:
    """Yield every local allocation of `items` among `nodes`, exactly once.

    Each item independently goes to one node or stays unallocated, so there
    are (len(nodes)+1)**len(items) allocations; more than `budget` raises
    :class:`OracleBudgetExceeded` up front.
    """
    items = tuple(sorted(items))
    nodes = tuple(nodes)
    k = len(nodes)
    count = (k + 1) ** len(items)
    if count > budget:
        raise OracleBudgetExceeded(
            f"{count} local allocations exceed the budget of {budget}"
        )
    source = frozenset(items)
    for masks in _splits(items, k):
        yield LocalAllocation(nodes, tuple(_bits(mk) for mk in masks[1:]), source)


def achievable_table(instance: Instance, budget: int = DEFAULT_BUDGET) -> dict[int, list[int]]:
    """Per node, the best achievable subtree utility of every item subset.

    Leaf tables evaluate the valuation on all 2^m subsets; internal tables
    combine children by subset max-convolution
    (best[S] = max over T subset-of S of left[T] + right[S minus T]).
    """
    m = instance.m
    if (1 << m) > budget:
        raise OracleBudgetExceeded(f"2^{m} subsets exceed the budget of {budget}")
    tree = instance.tree
    tables: dict[int, list[int]] = {}
    size = 1 << m
    for i in reversed(tree.node_ids):
        if tree.is_leaf(i):
            val = instance.valuations[i]
            tables[i] = [val.evaluate(_bits(mask)) for mask in range(size)]
        else:
            kids = tree.children(i)
            acc = tables[kids[0]]
            for c in kids[1:]:
                acc = _max_convolve(acc, tables[c], size)
            tables[i] = acc
    return tables


def _max_convolve(left: list[int], right: list[int], size: int) -> list[int]:
    out = [0] * size
    for s in range(size):
        best = left[0] + right[s]
        t = s
        while t:
            v = left[t] + right[s ^ t]
            if v > best:
                best = v
            t = (t - 1) & s
        out[s] = best
    return out


def best_achievable(instance: Instance, node: int, items: Iterable[int], budget: int = DEFAULT_BUDGET) -> int:
    """Best achievable subtree utility of `items`, by table lookup."""
    mask = 0
    for g in items:
        mask |= 1 << g
    return achievable_table(instance, budget)[node][mask]


def best_local_split(
    instance: Instance,
    node: int,
    items: Iterable[int],
    budget: int = DEFAULT_BUDGET,
    tables: Optional[dict[int, list[int]]] = None,
):
    """Criterion-best split of `items` among `node`'s children.

    Returns (best utility vector, share masks), where the vector holds each
    child's best-achievable utility of its share.  First best found in
    enumeration order wins ties.
    """
    tree = instance.tree
    kids = tree.children(node)
    if not kids:
        raise ValueError(f"node {node} is a leaf")
    crit = tree.criterion(node)
    weights = tuple(tree.weight(c) for c in kids)
    if tables is None:
        tables = achievable_table(instance, budget)
    items = tuple(sorted(items))
    k = len(kids)
    count = (k + 1) ** len(items)
    if count > budget:
        raise OracleBudgetExceeded(
            f"{count} local allocations exceed the budget of {budget}"
        )
    best_vec = None
    best_shares = None
    for masks in _splits(items, k):
        vec = tuple(tables[c][masks[j + 1]] for j, c in enumerate(kids))
        if best_vec is None or crit.compare_values(vec, best_vec, weights) == 1:
            best_vec = vec
            best_shares = tuple(masks[1:])
    return best_vec, best_shares


@dataclass(frozen=True)
class OracleVerdict:
    """Exhaustive optimality audit of an allocation.

    Utilitarian optimality and criterion-maximality are checked at every
    internal node against all splits of that node's bundle; the verdict is
    the conjunction.  `best_vectors`/`actual_vectors` record, per internal
    node, the criterion-best achievable children-utility vector and the
    realized one; `witnesses` holds a beating split for each failing node.
    """

    is_utilitarian_optimal: bool
    is_criterion_maximizing: bool
    failing_utilitarian: tuple[int, ...]
    failing_criterion: tuple[int, ...]
    best_vectors: dict[int, tuple[int, ...]]
    actual_vectors: dict[int, tuple[int, ...]]
    witnesses: dict[int, LocalAllocation]


def check_allocation(
    instance: Instance, alloc: MultilevelAllocation, budget: int = DEFAULT_BUDGET
) -> OracleVerdict:
    tree = instance.tree
    vals = instance.valuations
    tables = achievable_table(instance, budget)
    util_fail: list[int] = []
    crit_fail: list[int] = []
    best_vectors: dict[int, tuple[int, ...]] = {}
    actual_vectors: dict[int, tuple[int, ...]] = {}
    witnesses: dict[int, LocalAllocation] = {}
    for i in tree.internal_nodes:
        kids = tree.children(i)
        weights = tuple(tree.weight(c) for c in kids)
        crit = tree.criterion(i)
        bundle = alloc.bundle(i)
        mask = 0
        for g in bundle:
            mask |= 1 << g
        actual = tuple(node_utility(tree, vals, alloc, c) for c in kids)
        if sum(actual) < tables[i][mask]:
            util_fail.append(i)
        best_vec, best_shares = best_local_split(
            instance, i, bundle, budget=budget, tables=tables
        )
        best_vectors[i] = best_vec
        actual_vectors[i] = actual
        if crit.compare_values(actual, best_vec, weights) < 0:
            crit_fail.append(i)
            witnesses[i] = LocalAllocation(
                kids, tuple(_bits(mk) for mk in best_shares), frozenset(bundle)
            )
    return OracleVerdict(
        not util_fail,
        not crit_fail,
        tuple(util_fail),
        tuple(crit_fail),
        best_vectors,
        actual_vectors,
        witnesses,
    )
