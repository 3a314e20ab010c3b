"""The exhaustive ground truth: enumeration, best splits, and verdicts."""

from __future__ import annotations

import itertools

import pytest

from hierfair.oracle import (
    OracleBudgetExceeded,
    achievable_table,
    best_achievable,
    best_local_split,
    check_allocation,
    enumerate_local,
)
from hierfair.welfare import achievable_utility

from conftest import leaves_allocation


class TestEnumerateLocal:
    def test_counts_every_assignment_once(self):
        allocations = list(enumerate_local((0, 1), (4, 5), budget=100))
        assert len(allocations) == 9
        signatures = {
            tuple(frozenset(s) for s in a.shares) for a in allocations
        }
        assert len(signatures) == 9

    def test_no_items_yields_the_empty_allocation(self):
        allocations = list(enumerate_local((), (4, 5), budget=100))
        assert len(allocations) == 1
        assert allocations[0].shares == (frozenset(), frozenset())

    def test_budget_guard_fires_up_front(self):
        with pytest.raises(OracleBudgetExceeded, match="exceed the budget"):
            next(iter(enumerate_local(range(10), (1, 2, 3), budget=100)))

    def test_share_count_formula(self):
        for t, k in ((3, 1), (2, 3), (4, 2)):
            got = list(enumerate_local(range(t), tuple(range(k)), budget=10**6))
            assert len(got) == (k + 1) ** t


class TestBestSplit:
    def test_four_items_two_equal_takers(self, lorenz_instance):
        """All 81 splits of four universally liked items between two leaves:
        welfare 4 is reached exactly when nothing is left over."""
        tree, vals = lorenz_instance.tree, lorenz_instance.valuations
        items = (2, 3, 4, 5)
        welfare = []
        for local in enumerate_local(items, (6, 7), budget=100):
            welfare.append(
                vals[6].evaluate(local.share_of(6)) + vals[7].evaluate(local.share_of(7))
            )
        assert len(welfare) == 81
        assert max(welfare) == 4
        assert welfare.count(4) == 16

    def test_best_vector_balances_the_split(self, lorenz_instance):
        best_vec, best_shares = best_local_split(lorenz_instance, 3, (2, 3, 4, 5))
        assert tuple(sorted(best_vec)) == (2, 2)
        assert sum(mask.bit_count() for mask in best_shares) == 4

    def test_leaf_nodes_cannot_be_split(self, lorenz_instance):
        with pytest.raises(ValueError, match="node 7 is a leaf"):
            best_local_split(lorenz_instance, 7, (2, 3))


class TestAchievableTable:
    def test_agrees_with_the_augmenting_path_proxy(self, lorenz_instance):
        tree, vals = lorenz_instance.tree, lorenz_instance.valuations
        tables = achievable_table(lorenz_instance)
        for node in tree.node_ids:
            for mask in range(1 << 6):
                items = frozenset(g for g in range(6) if mask >> g & 1)
                assert tables[node][mask] == achievable_utility(tree, vals, node, items)

    def test_best_achievable_shortcut(self, lorenz_instance):
        assert best_achievable(lorenz_instance, 1, range(6)) == 6
        assert best_achievable(lorenz_instance, 2, {0}) == 1
        assert best_achievable(lorenz_instance, 2, {0, 1}) == 2


class TestVerdicts:
    def test_balanced_allocation_passes_both(self, lorenz_instance):
        alloc = leaves_allocation(
            lorenz_instance.tree, 6, {4: {0}, 5: {1}, 6: {2, 3}, 7: {4, 5}}
        )
        verdict = check_allocation(lorenz_instance, alloc)
        assert verdict.is_utilitarian_optimal
        assert verdict.is_criterion_maximizing
        assert verdict.failing_utilitarian == ()
        assert verdict.failing_criterion == ()

    def test_wasteful_swap_fails_utilitarian(self, lorenz_instance):
        # leaf 5 is indifferent to item 0, so giving it 0 and leaf 4 item 1
        # burns one unit of welfare under node 2
        alloc = leaves_allocation(
            lorenz_instance.tree, 6, {4: {1}, 5: {0}, 6: {2, 3}, 7: {4, 5}}
        )
        verdict = check_allocation(lorenz_instance, alloc)
        assert not verdict.is_utilitarian_optimal
        assert 2 in verdict.failing_utilitarian

    def test_lopsided_split_fails_the_criterion(self, lorenz_instance):
        alloc = leaves_allocation(
            lorenz_instance.tree, 6, {4: {0}, 5: {1}, 6: {2, 3, 4, 5}, 7: ()}
        )
        verdict = check_allocation(lorenz_instance, alloc)
        assert verdict.is_utilitarian_optimal
        assert not verdict.is_criterion_maximizing
        assert verdict.failing_criterion == (3,)
        assert verdict.actual_vectors[3] == (4, 0)
        assert tuple(sorted(verdict.best_vectors[3])) == (2, 2)

    def test_multilevel_swap_output_is_optimal_but_unfair_here(self, nash_instance):
        from hierfair.mgys import run_mgys

        verdict = check_allocation(nash_instance, run_mgys(nash_instance).allocation)
        assert verdict.is_utilitarian_optimal
        assert not verdict.is_criterion_maximizing
        assert verdict.failing_criterion == (1,)

    def test_budget_propagates(self, lorenz_instance):
        alloc = leaves_allocation(
            lorenz_instance.tree, 6, {4: {0}, 5: {1}, 6: {2, 3}, 7: {4, 5}}
        )
        with pytest.raises(OracleBudgetExceeded):
            check_allocation(lorenz_instance, alloc, budget=10)
