"""Fairness criteria: vector comparison, gain vectors, lexicographic order."""

from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hierfair.fairness import (
    InfiniteGain,
    Lorenz,
    UtilityVector,
    WeightedLeximin,
    WeightedNash,
    WeightedPMeans,
    lex_dominates,
    lorenz_dominates,
    parse_criterion,
)

ALL_TAGS = ("lorenz", "wleximin", "wnash", "wpmeans:1/2", "wpmeans:-1", "wpmeans:1")

vectors3 = st.tuples(*[st.integers(min_value=0, max_value=4)] * 3)
weights3 = st.tuples(*[st.sampled_from([1, 2, 5, Fraction(1, 2)])] * 3)


@pytest.fixture(params=ALL_TAGS)
def criterion(request):
    return parse_criterion(request.param)


class TestParse:
    def test_known_tags_round_trip(self):
        for tag in ALL_TAGS:
            crit = parse_criterion(tag)
            assert parse_criterion(crit.tag) == crit
        assert isinstance(parse_criterion("lorenz"), Lorenz)
        assert isinstance(parse_criterion("wleximin"), WeightedLeximin)
        assert isinstance(parse_criterion("wnash"), WeightedNash)
        assert parse_criterion("wpmeans:1/2").p == Fraction(1, 2)
        assert parse_criterion("wpmeans:-1").p == -1

    def test_bad_tags_are_rejected(self):
        with pytest.raises(ValueError, match="unknown fairness criterion"):
            parse_criterion("egalitarian")
        with pytest.raises(ValueError, match="p must be nonzero and at most 1"):
            parse_criterion("wpmeans:0")
        with pytest.raises(ValueError, match="p must be nonzero and at most 1"):
            parse_criterion("wpmeans:2")
        with pytest.raises(ValueError, match="bad wpmeans exponent"):
            parse_criterion("wpmeans:abc")


class TestUtilityVector:
    def test_validation(self):
        vec = UtilityVector((1, 2), (1, 5))
        assert vec.weights == (Fraction(1), Fraction(5))
        with pytest.raises(ValueError, match="one weight per value"):
            UtilityVector((1, 2), (1,))
        with pytest.raises(ValueError, match="non-negative"):
            UtilityVector((-1, 2), (1, 1))
        with pytest.raises(ValueError, match="positive"):
            UtilityVector((1, 2), (1, 0))

    def test_compare_checks_shape(self, criterion):
        a = UtilityVector((1, 2), (1, 1))
        with pytest.raises(ValueError, match="equal arity"):
            criterion.compare(a, UtilityVector((1, 2, 3), (1, 1, 1)))
        with pytest.raises(ValueError, match="same weights"):
            criterion.compare(a, UtilityVector((1, 2), (1, 5)))


class TestLexDominates:
    def test_first_coordinate_wins(self):
        assert lex_dominates((2, 0), (1, 9))

    def test_equal_vectors_do_not_dominate(self):
        assert not lex_dominates((1, 1), (1, 1))

    def test_smaller_utility_wins_under_negated_gains(self):
        assert not lex_dominates((-3,), (-2,))
        assert lex_dominates((-2,), (-3,))

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            lex_dominates((1,), (1, 2))

    def test_infinite_gain_sorts_above_all_finites(self):
        assert lex_dominates((InfiniteGain(),), (10**9,))
        assert not lex_dominates((10**9,), (InfiniteGain(),))
        assert lex_dominates((InfiniteGain(5),), (InfiniteGain(2),))
        assert not lex_dominates((InfiniteGain(2),), (InfiniteGain(2),))


class TestCompare:
    def test_lorenz_prefers_the_balanced_split(self):
        crit = parse_criterion("lorenz")
        assert crit.compare_values((1, 1, 2, 2), (1, 1, 4, 0), (1, 1, 1, 1)) > 0
        assert crit.compare_values((1, 1, 4, 0), (1, 1, 2, 2), (1, 1, 1, 1)) < 0

    def test_lorenz_breaks_sum_ties_leximin_style(self):
        crit = parse_criterion("lorenz")
        assert crit.compare_values((2, 2), (3, 1), (1, 1)) > 0
        assert crit.compare_values((3, 1), (1, 3), (1, 1)) == 0

    def test_nash_weighted_products(self):
        crit = parse_criterion("wnash")
        # 3^5 * 2^2 = 972 beats 2^5 * 3^2 = 288
        assert crit.compare_values((3, 2), (2, 3), (5, 2)) > 0
        assert crit.compare_values((2, 3), (3, 2), (5, 2)) < 0

    def test_nash_minimizes_zeros_first(self):
        crit = parse_criterion("wnash")
        assert crit.compare_values((1, 1), (9, 0), (1, 1)) > 0

    def test_nash_exact_on_equal_products(self):
        crit = parse_criterion("wnash")
        assert crit.compare_values((2, 3), (6, 1), (1, 1)) == 0
        half = Fraction(1, 2)
        assert crit.compare_values((4, 9), (6, 6), (half, half)) == 0
        assert crit.compare_values((4, 10), (6, 6), (half, half)) > 0

    def test_leximin_orders_weight_normalized_utilities(self):
        crit = parse_criterion("wleximin")
        # ratios sorted ascending: (0.2, 1) vs (0, 1)
        assert crit.compare_values((1, 1), (0, 5), (1, 5)) > 0
        # (1,5)/(1,5) normalizes to (1,1), beating (1,4)'s (0.8, 1)
        assert crit.compare_values((1, 5), (1, 4), (1, 5)) > 0
        # same normalized multiset: tie
        assert crit.compare_values((2, 5), (1, 10), (1, 5)) == 0

    def test_pmeans_square_root(self):
        crit = parse_criterion("wpmeans:1/2")
        assert crit.compare_values((4, 1), (2, 2), (1, 1)) > 0
        assert crit.compare_values((1, 1), (4, 0), (1, 1)) > 0

    def test_pmeans_harmonic(self):
        crit = parse_criterion("wpmeans:-1")
        assert crit.compare_values((2, 2), (4, 1), (1, 1)) > 0
        # a zero entry pins the mean for negative p: equal zero counts tie
        assert crit.compare_values((0, 5), (0, 1), (1, 1)) == 0
        assert crit.compare_values((1, 1), (0, 5), (1, 1)) > 0

    def test_pmeans_linear_is_weighted_sum(self):
        crit = parse_criterion("wpmeans:1")
        assert crit.compare_values((2, 1), (1, 2), (5, 1)) > 0

    @given(vectors3, weights3)
    def test_reflexive(self, values, weights):
        for tag in ALL_TAGS:
            assert parse_criterion(tag).compare_values(values, values, weights) == 0

    @given(vectors3, vectors3, weights3)
    def test_antisymmetric_total(self, a, b, weights):
        for tag in ALL_TAGS:
            crit = parse_criterion(tag)
            forward = crit.compare_values(a, b, weights)
            assert forward in (-1, 0, 1)
            assert forward == -crit.compare_values(b, a, weights)

    @given(vectors3, vectors3, vectors3, weights3)
    def test_transitive(self, a, b, c, weights):
        for tag in ALL_TAGS:
            crit = parse_criterion(tag)
            if crit.compare_values(a, b, weights) >= 0 and crit.compare_values(b, c, weights) >= 0:
                assert crit.compare_values(a, c, weights) >= 0

    @given(
        st.lists(st.tuples(*[st.integers(min_value=1, max_value=20)] * 4), min_size=1, max_size=8)
    )
    def test_nash_log_comparison_matches_exact_products(self, candidates):
        crit = parse_criterion("wnash")
        weights = (1, 1, 1, 1)
        for a in candidates:
            for b in candidates:
                expected = (math.prod(a) > math.prod(b)) - (math.prod(a) < math.prod(b))
                assert crit.compare_values(a, b, weights) == expected

    @given(st.lists(st.tuples(*[st.integers(min_value=0, max_value=5)] * 3), min_size=1, max_size=9))
    def test_lorenz_maximum_is_the_dominating_vector_when_one_exists(self, candidates):
        crit = parse_criterion("lorenz")
        weights = (1, 1, 1)
        best = candidates[0]
        for cand in candidates[1:]:
            if crit.compare_values(cand, best, weights) > 0:
                best = cand
        dominating = [
            v
            for v in candidates
            if all(
                lorenz_dominates(v, u) or sorted(v) == sorted(u) for u in candidates
            )
        ]
        if dominating:
            assert sorted(best) == sorted(dominating[0])


class TestGain:
    def test_lorenz_gain_is_negated_utility(self):
        assert parse_criterion("lorenz").gain(3, 1, 4) == (-3,)

    def test_nash_gain_values(self):
        crit = parse_criterion("wnash")
        assert crit.gain(1, 5, 4) == (32,)
        zero = crit.gain(0, 5, 4)
        assert zero == (InfiniteGain(),)
        assert lex_dominates(zero, crit.gain(1, 5, 4))

    def test_leximin_gain_prefers_low_ratio_then_light_weight(self):
        crit = parse_criterion("wleximin")
        # one extra item lifts a normalized utility by 1/w: on a ratio tie
        # the lighter sibling's jump sorts strictly higher
        assert lex_dominates(crit.gain(1, 1, 5), crit.gain(5, 5, 4))
        assert lex_dominates(crit.gain(0, 5, 5), crit.gain(1, 1, 4))
        # exhausted ties fall to the least node id
        assert lex_dominates(crit.gain(2, 1, 3), crit.gain(2, 1, 4))

    def test_pmeans_gain_serves_heavier_zero_agents_first(self):
        for tag in ("wpmeans:1/2", "wpmeans:-1", "wpmeans:1"):
            crit = parse_criterion(tag)
            assert lex_dominates(crit.gain(0, 2, 9), crit.gain(0, 1, 1))
            assert lex_dominates(crit.gain(0, 1, 9), crit.gain(7, 100, 1))

    def test_pmeans_gain_is_the_weighted_power_sum_step(self):
        assert parse_criterion("wpmeans:1").gain(3, 2, 1) == (2,)
        assert parse_criterion("wpmeans:-1").gain(1, 3, 1) == (Fraction(3, 2),)
        root = parse_criterion("wpmeans:1/2").gain(3, 2, 1)[0]
        assert root == pytest.approx(2 * (2.0 - math.sqrt(3.0)))

    @given(st.integers(min_value=0, max_value=30), st.integers(min_value=1, max_value=30))
    def test_gain_never_increases_with_utility(self, utility, step):
        for tag in ALL_TAGS:
            crit = parse_criterion(tag)
            for weight in (1, 2, Fraction(7, 2)):
                richer = crit.gain(utility + step, weight, 4)
                poorer = crit.gain(utility, weight, 4)
                assert not lex_dominates(richer, poorer)


class TestLorenzDominance:
    def test_prefix_sum_dominance(self):
        assert lorenz_dominates((1, 1, 2, 2), (1, 1, 4, 0))
        assert not lorenz_dominates((1, 1, 4, 0), (1, 1, 2, 2))
        assert not lorenz_dominates((2, 2), (2, 2))
        # incomparable: neither dominates
        assert not lorenz_dominates((3, 0), (1, 1))
        assert not lorenz_dominates((1, 1), (3, 0))
