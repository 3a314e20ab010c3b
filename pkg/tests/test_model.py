"""Trees, multilevel allocations, their invariants, and utility sums."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hierfair.fairness import parse_criterion
from hierfair.model import (
    POOL,
    ROOT,
    Instance,
    LocalAllocation,
    MultilevelAllocation,
    Tree,
    TreeError,
    node_utility,
    restrict,
    utility_profile,
    validate_allocation,
)
from hierfair.valuations import BinaryAdditive, UniformCap

from conftest import leaves_allocation, two_tier_tree

LORENZ = parse_criterion("lorenz")


def star_tree(k: int) -> Tree:
    return Tree({i: 1 for i in range(2, k + 2)}, criteria={1: LORENZ})


# ---------------------------------------------------------------------------
# tree construction


class TestTreeConstruction:
    def test_root_cannot_have_parent(self):
        with pytest.raises(TreeError, match="root node 1 cannot have a parent"):
            Tree({1: 0, 2: 1})

    def test_ids_must_be_dense(self):
        with pytest.raises(TreeError, match="node ids must be exactly 1..n"):
            Tree({3: 1})

    def test_parent_must_precede_child(self):
        with pytest.raises(TreeError, match="parent of node 3 must be an earlier node"):
            Tree({2: 1, 3: 5, 4: 1, 5: 1, 6: 1, 7: 1})

    def test_weights_must_be_positive(self):
        with pytest.raises(TreeError, match="weight of node 1 must be positive"):
            Tree({2: 1}, weights={1: 0})

    def test_criteria_must_cover_internal_nodes_exactly(self):
        with pytest.raises(TreeError, match="criteria must tag exactly the internal"):
            Tree({2: 1, 3: 1}, criteria={1: LORENZ, 2: LORENZ})
        with pytest.raises(TreeError, match="criteria must tag exactly the internal"):
            Tree({2: 1, 3: 1}, criteria={})

    def test_two_nodes_minimum(self):
        tree = Tree({2: 1}, criteria={1: LORENZ})
        assert tree.n == 2


class TestTreeQueries:
    def test_shape_queries(self):
        tree = two_tier_tree()
        assert list(tree.node_ids) == [1, 2, 3, 4, 5, 6, 7]
        assert tree.parent(ROOT) is None
        assert tree.parent(6) == 3
        assert tree.children(1) == (2, 3)
        assert tree.children(7) == ()
        assert tree.leaves == (4, 5, 6, 7)
        assert tree.internal_nodes == (1, 2, 3)
        assert not tree.is_leaf(2) and tree.is_leaf(5)

    def test_subtree_and_ancestors(self):
        tree = two_tier_tree()
        assert tree.subtree_leaves(1) == (4, 5, 6, 7)
        assert tree.subtree_leaves(3) == (6, 7)
        assert tree.subtree_leaves(5) == (5,)
        assert tree.ancestors(7) == (1, 3)
        assert tree.ancestors(ROOT) == ()

    def test_weights_default_to_one(self):
        tree = two_tier_tree(weights={2: 5, 3: 2})
        assert tree.weight(2) == Fraction(5)
        assert tree.weight(4) == Fraction(1)

    def test_leaves_have_no_criterion(self):
        tree = two_tier_tree()
        assert tree.criterion(1).tag == "lorenz"
        with pytest.raises(KeyError):
            tree.criterion(4)


# ---------------------------------------------------------------------------
# multilevel allocations


class TestMultilevelAllocation:
    def test_from_mapping_defaults_to_empty(self):
        alloc = MultilevelAllocation.from_mapping(3, {1: [0, 1]}, pool=[2])
        assert alloc.n == 3
        assert alloc.bundle(1) == {0, 1}
        assert alloc.bundle(2) == frozenset()
        assert alloc.pool == {2}
        assert alloc.bundle(POOL) == {2}

    def test_replace_is_persistent(self):
        alloc = MultilevelAllocation.from_mapping(2, {1: [0]})
        changed = alloc.replace(2, frozenset({0}))
        assert alloc.bundle(2) == frozenset()
        assert changed.bundle(2) == {0}


class TestValidateAllocation:
    def test_valid_allocation_passes(self, lorenz_instance):
        alloc = leaves_allocation(
            lorenz_instance.tree, 6, {4: {0}, 5: {1}, 6: {2, 3, 4, 5}, 7: ()}
        )
        report = validate_allocation(lorenz_instance.tree, alloc, 6)
        assert report.ok and report.violations == ()

    def test_root_must_own_everything(self):
        tree = two_tier_tree()
        alloc = MultilevelAllocation.from_mapping(7, {1: [0, 1]})
        report = validate_allocation(tree, alloc, 3)
        assert not report.ok
        assert [v.code for v in report.violations] == ["root-owns-all"]

    def test_sibling_overlap_is_flagged(self):
        tree = two_tier_tree()
        alloc = MultilevelAllocation.from_mapping(
            7, {1: range(3), 2: [0], 3: [1], 4: [0], 5: [0]}
        )
        report = validate_allocation(tree, alloc, 3)
        assert {v.code for v in report.violations} == {"sibling-disjointness"}

    def test_child_escaping_its_parent_is_flagged(self):
        tree = two_tier_tree()
        alloc = MultilevelAllocation.from_mapping(
            7, {1: range(3), 2: [0], 3: [1], 4: [0], 5: [2]}
        )
        report = validate_allocation(tree, alloc, 3)
        assert {v.code for v in report.violations} == {"child-subset"}

    def test_unknown_items_are_flagged(self):
        tree = two_tier_tree()
        alloc = MultilevelAllocation.from_mapping(7, {1: range(3), 2: [9]})
        report = validate_allocation(tree, alloc, 3)
        assert "unknown-items" in {v.code for v in report.violations}

    def test_fold_pool_treats_pool_as_root_child(self):
        tree = two_tier_tree()
        mapping = {1: range(6), 2: [0, 1], 3: [2, 3], 4: [0], 5: [1], 6: [2], 7: [3]}
        clean = MultilevelAllocation.from_mapping(7, mapping, pool=[4, 5])
        assert validate_allocation(tree, clean, 6, fold_pool=True).ok
        overlap = MultilevelAllocation.from_mapping(7, mapping, pool=[1, 4, 5])
        assert validate_allocation(tree, overlap, 6).ok
        report = validate_allocation(tree, overlap, 6, fold_pool=True)
        assert not report.ok
        assert {v.code for v in report.violations} == {"sibling-disjointness"}

    def test_node_count_mismatch_raises(self):
        tree = two_tier_tree()
        alloc = MultilevelAllocation.from_mapping(3, {1: [0]})
        with pytest.raises(ValueError, match="allocation indexes 3 nodes"):
            validate_allocation(tree, alloc, 1)


class TestRestrict:
    def test_children_of_one_node_use_parent_bundle(self, lorenz_instance):
        tree = lorenz_instance.tree
        alloc = leaves_allocation(tree, 6, {4: {0}, 5: {1}, 6: {2, 3, 4, 5}, 7: ()})
        local = restrict(tree, alloc, (4, 5))
        assert local.nodes == (4, 5)
        assert local.source == {0, 1}
        assert local.shares == (frozenset({0}), frozenset({1}))
        top = restrict(tree, alloc, (2, 3))
        assert top.source == frozenset(range(6))
        assert top.share_of(2) == {0, 1}
        assert top.share_of(3) == {2, 3, 4, 5}

    def test_other_node_sets_use_root_bundle(self, lorenz_instance):
        tree = lorenz_instance.tree
        alloc = leaves_allocation(tree, 6, {4: {0}, 5: {1}, 6: {2, 3, 4, 5}, 7: ()})
        assert restrict(tree, alloc, (6,)).source == frozenset(range(6))
        assert restrict(tree, alloc, (4, 6)).shares == (
            frozenset({0}),
            frozenset({2, 3, 4, 5}),
        )

    def test_unknown_node_raises(self, lorenz_instance):
        alloc = leaves_allocation(lorenz_instance.tree, 6, {})
        with pytest.raises(ValueError, match="unknown node id 9"):
            restrict(lorenz_instance.tree, alloc, (9,))


class TestLocalAllocation:
    def test_share_outside_source_raises(self):
        with pytest.raises(ValueError):
            LocalAllocation((2, 3), (frozenset({5}), frozenset()), frozenset({0, 1}))

    def test_overlapping_shares_raise(self):
        with pytest.raises(ValueError):
            LocalAllocation((2, 3), (frozenset({0}), frozenset({0})), frozenset({0, 1}))

    def test_unallocated_is_the_leftover(self):
        local = LocalAllocation((2, 3), (frozenset({0}), frozenset({2})), frozenset(range(4)))
        assert local.unallocated == {1, 3}
        assert local.share_of(3) == {2}


# ---------------------------------------------------------------------------
# utilities


class TestNodeUtility:
    def test_hand_checked_utilities(self, lorenz_instance):
        tree, vals = lorenz_instance.tree, lorenz_instance.valuations
        alloc = leaves_allocation(tree, 6, {4: {0}, 5: {1}, 6: {2, 3, 4, 5}, 7: ()})
        assert utility_profile(tree, vals, alloc, tree.node_ids) == (6, 2, 4, 1, 1, 4, 0)

    def test_empty_bundle_is_worth_nothing(self, lorenz_instance):
        tree, vals = lorenz_instance.tree, lorenz_instance.valuations
        alloc = leaves_allocation(tree, 6, {})
        assert node_utility(tree, vals, alloc, 7) == 0
        assert node_utility(tree, vals, alloc, 1) == 0

    @given(st.lists(st.sampled_from([None, 4, 5, 6, 7]), min_size=6, max_size=6))
    def test_children_sum_equals_leaf_sum(self, destinations):
        tree = two_tier_tree()
        vals = {
            4: BinaryAdditive(frozenset({0, 1, 2})),
            5: UniformCap(2),
            6: BinaryAdditive(frozenset({3, 4, 5})),
            7: BinaryAdditive(frozenset(range(6))),
        }
        leaf_bundles = {leaf: set() for leaf in tree.leaves}
        for item, dest in enumerate(destinations):
            if dest is not None:
                leaf_bundles[dest].add(item)
        alloc = leaves_allocation(tree, 6, leaf_bundles)
        for i in tree.internal_nodes:
            by_children = sum(node_utility(tree, vals, alloc, c) for c in tree.children(i))
            by_leaves = sum(
                vals[x].evaluate(alloc.bundle(x)) for x in tree.subtree_leaves(i)
            )
            assert node_utility(tree, vals, alloc, i) == by_children == by_leaves


# ---------------------------------------------------------------------------
# instances


class TestInstance:
    def test_valuations_must_cover_exactly_the_leaves(self):
        tree = two_tier_tree()
        vals = {leaf: BinaryAdditive(frozenset({0})) for leaf in (4, 5, 6)}
        with pytest.raises(ValueError):
            Instance(tree, 2, vals)
        vals = {node: BinaryAdditive(frozenset({0})) for node in (3, 4, 5, 6, 7)}
        with pytest.raises(ValueError):
            Instance(tree, 2, vals)

    def test_approvals_must_stay_in_range(self):
        tree = two_tier_tree()
        vals = {leaf: BinaryAdditive(frozenset({0})) for leaf in tree.leaves}
        vals[7] = BinaryAdditive(frozenset({5}))
        with pytest.raises(ValueError):
            Instance(tree, 3, vals)

    def test_items_property(self, nash_instance):
        assert nash_instance.items == frozenset(range(5))
        assert nash_instance.m == 5
