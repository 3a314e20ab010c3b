"""Leaf valuation families.

All four families are matroid rank functions: normalized, monotone,
submodular, with marginal gains in {0, 1}.  ``mrf_axiom_check`` verifies
those axioms for any valuation, exhaustively when the universe is small.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence


class Valuation:
    """Interface shared by the concrete leaf valuation families."""

    def evaluate(self, bundle: Iterable[int]) -> int:
        raise NotImplementedError

    def marginal(self, bundle: Iterable[int], item: int) -> int:
        """Gain of adding `item` to `bundle`; always 0 or 1 for these families."""
        s = frozenset(bundle)
        if item in s:
            raise ValueError(f"item {item} already in bundle")
        return self.evaluate(s | {item}) - self.evaluate(s)

    def kernel_descriptor(self) -> tuple:
        """Compact form consumed by the exchange-graph engines."""
        raise NotImplementedError


def _mask(items: Iterable[int]) -> int:
    out = 0
    for g in items:
        out |= 1 << g
    return out


@dataclass(frozen=True)
class BinaryAdditive(Valuation):
    """Counts the approved items in the bundle."""

    approved: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "approved", frozenset(self.approved))

    def evaluate(self, bundle: Iterable[int]) -> int:
        return len(self.approved & frozenset(bundle))

    def kernel_descriptor(self) -> tuple:
        return ("binary", _mask(self.approved))


@dataclass(frozen=True)
class CappedBinaryAdditive(Valuation):
    """Counts approved items, saturating at `cap`."""

    approved: frozenset[int]
    cap: int

    def __post_init__(self):
        object.__setattr__(self, "approved", frozenset(self.approved))
        if self.cap < 0:
            raise ValueError("cap must be non-negative")

    def evaluate(self, bundle: Iterable[int]) -> int:
        return min(len(self.approved & frozenset(bundle)), self.cap)

    def kernel_descriptor(self) -> tuple:
        return ("capped", _mask(self.approved), self.cap)


@dataclass(frozen=True)
class UniformCap(Valuation):
    """Values any `cap` items; only cardinality matters."""

    cap: int

    def __post_init__(self):
        if self.cap < 0:
            raise ValueError("cap must be non-negative")

    def evaluate(self, bundle: Iterable[int]) -> int:
        return min(len(frozenset(bundle)), self.cap)

    def kernel_descriptor(self) -> tuple:
        return ("uniform", self.cap)


@dataclass(frozen=True)
class BinaryAssignment(Valuation):
    """Utility of a bundle is the largest assignment of distinct bundle items
    to internal sub-agents, each sub-agent approving a fixed item set and
    consuming at most one item.  This is the transversal-matroid rank of the
    bundle.
    """

    subagents: tuple[frozenset[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "subagents", tuple(frozenset(s) for s in self.subagents))
        if not self.subagents:
            raise ValueError("at least one sub-agent required")

    def evaluate(self, bundle: Iterable[int]) -> int:
        return max_assignment_size(self.subagents, frozenset(bundle))

    def kernel_descriptor(self) -> tuple:
        return ("assignment", tuple(_mask(s) for s in self.subagents))


def max_assignment_size(subagents: Sequence[frozenset[int]], bundle: frozenset[int]) -> int:
    """Maximum bipartite matching between sub-agents and bundle items.

    Hopcroft-Karp: repeat BFS layering from unmatched sub-agents and
    shortest augmenting DFS passes until no augmenting path remains.
    """
    items = sorted(bundle)
    if not items:
        return 0
    index = {g: j for j, g in enumerate(items)}
    adj = [tuple(index[g] for g in sorted(row & bundle)) for row in subagents]
    nl, nr = len(adj), len(items)
    inf = nl + nr + 1
    match_l = [-1] * nl
    match_r = [-1] * nr
    dist = [0] * nl

    def bfs() -> bool:
        queue = deque()
        for u in range(nl):
            if match_l[u] == -1:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = inf
        reached_free = inf
        while queue:
            u = queue.popleft()
            if dist[u] >= reached_free:
                continue
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    reached_free = min(reached_free, dist[u] + 1)
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return reached_free < inf

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = inf
        return False

    size = 0
    while bfs():
        for u in range(nl):
            if match_l[u] == -1 and dfs(u):
                size += 1
    return size


@dataclass(frozen=True)
class MrfCheckReport:
    ok: bool
    axiom: Optional[str] = None
    witness: Optional[tuple] = None


def mrf_axiom_check(
    valuation: Valuation,
    m: int,
    exhaustive_limit: int = 10,
    trials: int = 2000,
    seed: int = 0,
) -> MrfCheckReport:
    """Verify the matroid-rank axioms over the universe 0..m-1.

    Exhaustive for m <= exhaustive_limit (every pair S subset-of T and every
    added item), random sampling beyond.  Returns the first violated axiom
    with a witness.
    """
    if m <= exhaustive_limit:
        table = [0] * (1 << m)
        for mask in range(1 << m):
            table[mask] = valuation.evaluate(_bits(mask))
        if table[0] != 0:
            return MrfCheckReport(False, "normalized", (frozenset(),))
        for t in range(1 << m):
            for g in range(m):
                if t >> g & 1:
                    continue
                d = table[t | (1 << g)] - table[t]
                if d not in (0, 1):
                    return MrfCheckReport(False, "binary-marginal", (_bits(t), g))
                # submodularity against every subset of t
                s = t
                while True:
                    if table[s | (1 << g)] - table[s] < d:
                        return MrfCheckReport(
                            False, "submodular", (_bits(s), _bits(t), g)
                        )
                    if s == 0:
                        break
                    s = (s - 1) & t
        return MrfCheckReport(True)

    rng = random.Random(seed)
    if valuation.evaluate(frozenset()) != 0:
        return MrfCheckReport(False, "normalized", (frozenset(),))
    for _ in range(trials):
        t_mask = rng.getrandbits(m)
        s_mask = t_mask & rng.getrandbits(m)
        outside = [g for g in range(m) if not t_mask >> g & 1]
        if not outside:
            continue
        g = rng.choice(outside)
        s, t = _bits(s_mask), _bits(t_mask)
        ds = valuation.evaluate(s | {g}) - valuation.evaluate(s)
        dt = valuation.evaluate(t | {g}) - valuation.evaluate(t)
        if dt not in (0, 1):
            return MrfCheckReport(False, "binary-marginal", (t, g))
        if ds < dt:
            return MrfCheckReport(False, "submodular", (s, t, g))
    return MrfCheckReport(True)


def _bits(mask: int) -> frozenset[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return frozenset(out)
