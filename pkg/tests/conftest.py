"""Shared fixtures: two hand-sized hierarchies reused across the suite.

Both live on the same seven-node shape (a root over two internal nodes,
each with two leaf children) so results can be checked by hand:

* ``lorenz_instance`` — six items, unit weights, every internal node wants
  a Lorenz-dominating split; the two leaves under one internal node are
  satisfied by a single item, one of them rejecting item 0; the other two
  leaves count every item they receive.
* ``nash_instance`` — five items, internal-node weights 5 and 2, a
  weighted-Nash root over Lorenz internal nodes; three leaves approve
  items {0,1,2} and the fourth approves {2,3,4}.  The two solvers disagree
  at the root on this instance, which several tests rely on.
"""

from __future__ import annotations

import pytest

from hierfair.fairness import parse_criterion
from hierfair.model import Instance, MultilevelAllocation, Tree
from hierfair.valuations import BinaryAdditive, CappedBinaryAdditive

TWO_TIER_PARENTS = {2: 1, 3: 1, 4: 2, 5: 2, 6: 3, 7: 3}

#: verdict lines collected by the acceptance gates, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_tier_tree(weights=None, criteria="lorenz") -> Tree:
    """The seven-node, two-tier tree with one criterion tag everywhere."""
    crit = parse_criterion(criteria)
    return Tree(TWO_TIER_PARENTS, weights, {i: crit for i in (1, 2, 3)})


def leaves_allocation(tree: Tree, m: int, leaf_bundles) -> MultilevelAllocation:
    """Complete leaf bundles into a full multilevel allocation.

    Internal nodes get the union of their descendant leaves' bundles and
    the root gets every item, which is how all three solvers shape their
    output.
    """
    bundles = {leaf: frozenset(items) for leaf, items in leaf_bundles.items()}
    for i in reversed(tree.internal_nodes):
        merged = frozenset()
        for child in tree.children(i):
            merged |= bundles.get(child, frozenset())
        bundles[i] = merged
    bundles[1] = frozenset(range(m))
    return MultilevelAllocation.from_mapping(tree.n, bundles)


@pytest.fixture
def lorenz_instance() -> Instance:
    tree = two_tier_tree()
    valuations = {
        4: CappedBinaryAdditive(frozenset(range(6)), 1),
        5: CappedBinaryAdditive(frozenset(range(1, 6)), 1),
        6: BinaryAdditive(frozenset(range(6))),
        7: BinaryAdditive(frozenset(range(6))),
    }
    return Instance(tree, 6, valuations)


@pytest.fixture
def nash_instance() -> Instance:
    tree = Tree(
        TWO_TIER_PARENTS,
        {2: 5, 3: 2},
        {
            1: parse_criterion("wnash"),
            2: parse_criterion("lorenz"),
            3: parse_criterion("lorenz"),
        },
    )
    valuations = {
        4: BinaryAdditive(frozenset({0, 1, 2})),
        5: BinaryAdditive(frozenset({0, 1, 2})),
        6: BinaryAdditive(frozenset({0, 1, 2})),
        7: BinaryAdditive(frozenset({2, 3, 4})),
    }
    return Instance(tree, 5, valuations)
