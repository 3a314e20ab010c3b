"""Fairness criteria over sibling utility vectors.

Each criterion is a total preorder on utility vectors (used to audit
allocations) plus a gain vector (used by the swap solvers to pick which
agent deserves the next item).  Gain vectors are compared lexicographically;
a sentinel :class:`InfiniteGain` outranks every finite component so that
zero-utility agents are served first where the criterion demands it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

Weight = Union[int, Fraction]

#: float margin under which multiplicative comparisons switch to exact arithmetic
_LOG_MARGIN = 1e-9


@functools.total_ordering
class InfiniteGain:
    """Gain component larger than any finite value; scaled copies order by scale."""

    __slots__ = ("scale",)

    def __init__(self, scale: Weight = 1):
        self.scale = Fraction(scale)

    def __eq__(self, other):
        return isinstance(other, InfiniteGain) and self.scale == other.scale

    def __lt__(self, other):
        if isinstance(other, InfiniteGain):
            return self.scale < other.scale
        if isinstance(other, (int, float, Fraction)):
            return False
        return NotImplemented

    def __hash__(self):
        return hash(("InfiniteGain", self.scale))

    def __repr__(self):
        return f"InfiniteGain({self.scale})"


def lex_dominates(a: Sequence, b: Sequence) -> bool:
    """True iff `a` is strictly greater than `b` at the first differing index."""
    if len(a) != len(b):
        raise ValueError("gain vectors must have equal length")
    for x, y in zip(a, b):
        if x == y:
            continue
        return x > y
    return False


@dataclass(frozen=True)
class UtilityVector:
    """Utilities of a sibling group, paired with the siblings' weights."""

    values: tuple[int, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        object.__setattr__(self, "weights", tuple(Fraction(w) for w in self.weights))
        if len(self.values) != len(self.weights):
            raise ValueError("one weight per value required")
        if any(v < 0 for v in self.values):
            raise ValueError("utilities are non-negative")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights are positive")


class FairnessCriterion:
    """Base class: comparison of utility vectors and per-agent gain vectors."""

    tag: str

    def compare(self, a: UtilityVector, b: UtilityVector) -> int:
        """1 if `a` is strictly better, -1 if `b` is, 0 if tied."""
        if len(a.values) != len(b.values):
            raise ValueError("vectors must have equal arity")
        if a.weights != b.weights:
            raise ValueError("vectors must share the same weights")
        return self.compare_values(a.values, b.values, a.weights)

    def compare_values(
        self, a: Sequence[int], b: Sequence[int], weights: Sequence[Fraction]
    ) -> int:
        raise NotImplementedError

    def gain(self, utility: int, weight: Weight, node: int) -> tuple:
        """Priority of giving one more item to an agent at `utility`.

        Solvers serve the lexicographically largest gain vector, breaking
        exact ties by least node id.
        """
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


def _sign(x) -> int:
    return (x > 0) - (x < 0)


class Lorenz(FairnessCriterion):
    """Prefers allocations whose sorted utility prefix sums dominate.

    The classic dominance relation is partial; it is completed into a total
    preorder by comparing total utility first and then the ascending-sorted
    vector lexicographically (strict dominance always agrees with this
    order).  Weights are ignored.
    """

    tag = "lorenz"

    def compare_values(self, a, b, weights):
        ka = (sum(a), tuple(sorted(a)))
        kb = (sum(b), tuple(sorted(b)))
        return (ka > kb) - (ka < kb)

    def gain(self, utility, weight, node):
        return (-utility,)


def lorenz_dominates(a: Sequence[int], b: Sequence[int]) -> bool:
    """Strict Lorenz dominance: every prefix sum of sorted(a) at least that of
    sorted(b), at least one strictly greater.  Partial relation, used by tests
    and audits as the underlying definition behind :class:`Lorenz`.
    """
    if len(a) != len(b):
        raise ValueError("vectors must have equal length")
    pa = pb = 0
    some_strict = False
    for x, y in zip(sorted(a), sorted(b)):
        pa += x
        pb += y
        if pa < pb:
            return False
        if pa > pb:
            some_strict = True
    return some_strict


class WeightedLeximin(FairnessCriterion):
    """Maximizes the smallest weight-normalized utility, then the next, etc.

    The gain vector serves the lowest-ratio agent first and, on ratio ties,
    the lighter agent: one extra item lifts a normalized utility by 1/w, so
    when two agents sit at the same level the lighter one's jump is larger
    and sorts strictly higher.  A plain least-index tie-break would hand the
    item to an arbitrary agent and can end one lexicographic step short.
    """

    tag = "wleximin"

    def compare_values(self, a, b, weights):
        ka = tuple(sorted(Fraction(v) / w for v, w in zip(a, weights)))
        kb = tuple(sorted(Fraction(v) / w for v, w in zip(b, weights)))
        return (ka > kb) - (ka < kb)

    def gain(self, utility, weight, node):
        w = Fraction(weight)
        return (Fraction(-utility) / w, -w, -node)


class WeightedNash(FairnessCriterion):
    """Maximizes the weighted product of utilities.

    Vectors with fewer zero entries always win; among equal zero counts the
    product runs over the positive entries.  Verdicts use a logarithmic
    prefilter and fall back to exact big-integer products when the margin is
    tiny.
    """

    tag = "wnash"

    def compare_values(self, a, b, weights):
        za = sum(1 for v in a if v == 0)
        zb = sum(1 for v in b if v == 0)
        if za != zb:
            return 1 if za < zb else -1
        la = math.fsum(float(w) * math.log(v) for v, w in zip(a, weights) if v > 0)
        lb = math.fsum(float(w) * math.log(v) for v, w in zip(b, weights) if v > 0)
        if abs(la - lb) > _LOG_MARGIN:
            return 1 if la > lb else -1
        scale = 1
        for w in weights:
            scale = math.lcm(scale, Fraction(w).denominator)
        pa = math.prod(v ** int(w * scale) for v, w in zip(a, weights) if v > 0)
        pb = math.prod(v ** int(w * scale) for v, w in zip(b, weights) if v > 0)
        return (pa > pb) - (pa < pb)

    def gain(self, utility, weight, node):
        if utility == 0:
            return (InfiniteGain(),)
        w = Fraction(weight)
        base = Fraction(utility + 1, utility)
        if w.denominator == 1:
            return (base ** int(w),)
        return (float(base) ** float(w),)


class WeightedPMeans(FairnessCriterion):
    """Maximizes the weighted power mean of order p (p <= 1, p != 0).

    Vectors with fewer zeros win.  With p < 0 a zero entry pins the mean to
    its degenerate floor, so vectors with equal zero counts and at least one
    zero compare equal; otherwise the comparison reduces to the weighted
    power sum (flipped for p < 0, where the outer 1/p exponent reverses
    order).  Integer p is compared exactly; fractional p uses compensated
    float sums, exact only up to double precision.
    """

    def __init__(self, p: Weight):
        p = Fraction(p)
        if p == 0 or p > 1:
            raise ValueError("p must be nonzero and at most 1")
        self.p = p

    @property
    def tag(self) -> str:
        return f"wpmeans:{self.p}"

    def __eq__(self, other):
        return isinstance(other, WeightedPMeans) and self.p == other.p

    def __hash__(self):
        return hash((type(self), self.p))

    def __repr__(self):
        return f"WeightedPMeans({self.p})"

    def _power_sum(self, values, weights):
        p = self.p
        if p.denominator == 1:
            e = int(p)
            return sum(w * Fraction(v) ** e for v, w in zip(values, weights) if v > 0)
        terms = sorted(
            float(w) * float(v) ** float(p) for v, w in zip(values, weights) if v > 0
        )
        return math.fsum(terms)

    def compare_values(self, a, b, weights):
        za = sum(1 for v in a if v == 0)
        zb = sum(1 for v in b if v == 0)
        if za != zb:
            return 1 if za < zb else -1
        if self.p < 0 and za > 0:
            return 0
        sa = self._power_sum(a, weights)
        sb = self._power_sum(b, weights)
        if self.p > 0:
            return (sa > sb) - (sa < sb)
        return (sa < sb) - (sa > sb)

    def gain(self, utility, weight, node):
        """Zero-utility agents outrank every positive one (the zero-count
        tier of the criterion), heavier agents first since their first unit
        adds more weighted welfare; positive agents are served by the exact
        marginal change of the weighted power sum.
        """
        p = self.p
        w = Fraction(weight)
        if utility == 0:
            return (InfiniteGain(w),)
        if p.denominator == 1:
            e = int(p)
            step = Fraction(utility + 1) ** e - Fraction(utility) ** e
            return (_sign(p) * w * step,)
        step = float(utility + 1) ** float(p) - float(utility) ** float(p)
        return (_sign(p) * float(w) * step,)


_SIMPLE = {c.tag: c for c in (Lorenz(), WeightedLeximin(), WeightedNash())}


def parse_criterion(tag: str) -> FairnessCriterion:
    """Build a criterion from its tag: lorenz, wleximin, wnash, wpmeans:<p>."""
    tag = tag.strip()
    if tag in _SIMPLE:
        return _SIMPLE[tag]
    if tag.startswith("wpmeans:"):
        try:
            p = Fraction(tag.split(":", 1)[1])
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"bad wpmeans exponent in {tag!r}") from exc
        return WeightedPMeans(p)
    raise ValueError(f"unknown fairness criterion {tag!r}")
