"""Sequential top-down solver.

Each internal node, visited parents first, divides the bundle it received
among its children with the one-level swap loop, valuing every child by the
best total utility its subtree could extract (a matroid rank, so the loop's
guarantees apply).  Items the root declines to pass down are the discarded
set; below the root every bundle is fully distributable, so nothing else is
ever left over.
"""

from __future__ import annotations

from typing import Optional

from .model import ROOT, Instance, MultilevelAllocation, SolveResult
from .welfare import proxy_valuation, yankee_swap

__all__ = ["run_sma"]


def run_sma(instance: Instance, backend: Optional[str] = None) -> SolveResult:
    """Solve an instance level by level from the root down.

    The result is utilitarian-optimal and criterion-maximizing at every
    internal node simultaneously.  ``iterations`` sums the rounds of all
    local swap runs.
    """
    tree = instance.tree
    vals = instance.valuations
    m = instance.m
    bundles: dict[int, frozenset[int]] = {ROOT: frozenset(range(m))}
    iterations = 0
    for i in tree.internal_nodes:
        kids = tree.children(i)
        result = yankee_swap(
            kids,
            [tree.weight(c) for c in kids],
            [proxy_valuation(tree, vals, c) for c in kids],
            bundles[i],
            tree.criterion(i),
            m,
            backend=backend,
        )
        iterations += result.iterations
        for c in kids:
            bundles[c] = result.allocation.share_of(c)
        assert i == ROOT or not result.allocation.unallocated, (
            f"non-root node {i} left items undistributed"
        )
    alloc = MultilevelAllocation.from_mapping(tree.n, bundles)
    return SolveResult("sma", alloc, iterations)
