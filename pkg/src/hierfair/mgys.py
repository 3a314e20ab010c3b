"""Multilevel swap solver.

One exchange graph over all leaves, one pool of unallocated items attached
to the root.  Each round walks the hierarchy top-down to the leaf whose
chain of gain vectors is most deserving, then either augments that leaf
along a shortest transfer path ending in the pool or retires the leaf (and
any ancestor left without live children).  Internal bundles follow the item
moves so the structural invariants hold after every round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ._kernel import engine_class, iter_bits
from .fairness import lex_dominates
from .model import POOL, ROOT, Instance, MultilevelAllocation, SolveResult, Tree

__all__ = [
    "AuditViolation",
    "IterationRecord",
    "MgysState",
    "run_mgys",
    "select_leaf",
]


class AuditViolation(AssertionError):
    """An audited run broke a maintained invariant."""


@dataclass(frozen=True)
class IterationRecord:
    """One solver round, as emitted by trace mode."""

    index: int
    leaf: int
    path: Optional[tuple[int, ...]]
    moves: tuple[tuple[int, int, int], ...]  # (item, from node, to node); 0 = pool
    pruned: tuple[int, ...]
    pool_size: int

    def to_json(self) -> dict:
        return {
            "iteration": self.index,
            "leaf": self.leaf,
            "path": list(self.path) if self.path is not None else None,
            "moves": [list(mv) for mv in self.moves],
            "pruned": list(self.pruned),
            "pool": self.pool_size,
        }


@dataclass
class MgysState:
    """Mutable working state of a run (exposed for selection and tests)."""

    tree: Tree
    engine: object
    leaf_index: Mapping[int, int]
    sizes: dict[int, int]
    live_children: dict[int, list[int]]
    live: set[int]
    bundles: dict[int, set[int]]
    closures: dict[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.closures:
            for i in self.tree.node_ids:
                self.closures[i] = frozenset(self.tree.ancestors(i)) | {i}
            self.closures[POOL] = frozenset((POOL, ROOT))


def select_leaf(state: MgysState) -> int:
    """Walk from the root to the leaf that deserves the next item.

    At every internal node the live child with the lexicographically largest
    gain vector (under that node's criterion) is entered; exact ties go to
    the least node id.  The pool never competes.
    """
    tree = state.tree
    node = ROOT
    while not tree.is_leaf(node):
        crit = tree.criterion(node)
        best = None
        best_gain = None
        for c in state.live_children[node]:
            gv = crit.gain(state.sizes[c], tree.weight(c), c)
            if best is None or lex_dominates(gv, best_gain):
                best, best_gain = c, gv
        if best is None:
            raise RuntimeError(f"internal node {node} has no live children")
        node = best
    return node


def _prune(state: MgysState, leaf: int) -> tuple[int, ...]:
    tree = state.tree
    removed = [leaf]
    state.live.discard(leaf)
    node = tree.parent(leaf)
    state.live_children[node].remove(leaf)
    while node != ROOT and not state.live_children[node]:
        parent = tree.parent(node)
        state.live.discard(node)
        state.live_children[parent].remove(node)
        removed.append(node)
        node = parent
    return tuple(removed)


def _audit_check(instance: Instance, state: MgysState, iteration: int) -> None:
    tree = instance.tree
    for leaf in tree.leaves:
        bundle = frozenset(iter_bits(state.engine.bundle_mask(state.leaf_index[leaf])))
        if instance.valuations[leaf].evaluate(bundle) != len(bundle):
            raise AuditViolation(
                f"iteration {iteration}: leaf {leaf} bundle of size "
                f"{len(bundle)} is redundant"
            )
    for i in tree.internal_nodes:
        if i not in state.live:
            continue
        total = 0
        for leaf in tree.subtree_leaves(i):
            bundle = frozenset(iter_bits(state.engine.bundle_mask(state.leaf_index[leaf])))
            total += instance.valuations[leaf].evaluate(bundle)
        held = state.sizes[i]
        if i == ROOT:
            held -= state.sizes[POOL]  # the pool rides inside the root bundle
        if total != held:
            raise AuditViolation(
                f"iteration {iteration}: node {i} holds {held} items "
                f"beyond the pool but its leaves realize {total}"
            )


def _audit_deltas(
    state: MgysState,
    before: dict[int, int],
    leaf: int,
    loser: int,
    iteration: int,
) -> None:
    gain_side = state.closures[leaf] - state.closures[loser]
    lose_side = state.closures[loser] - state.closures[leaf]
    for i in list(state.sizes):
        expected = before[i] + (i in gain_side) - (i in lose_side)
        if state.sizes[i] != expected:
            raise AuditViolation(
                f"iteration {iteration}: node {i} moved from {before[i]} to "
                f"{state.sizes[i]}, expected {expected}"
            )


def run_mgys(
    instance: Instance,
    backend: Optional[str] = None,
    trace: bool = False,
    audit: bool = False,
) -> SolveResult:
    """Solve an instance with the multilevel swap algorithm.

    The returned allocation is utilitarian-optimal at every internal node;
    the pool contents end up in the allocation's node-0 slot (they are the
    items the root never passed down).  With ``audit`` every round re-checks
    that all live bundles stay fully used and that item moves change
    ancestor bundle sizes exactly along the two endpoint root-paths,
    raising :class:`AuditViolation` otherwise.  With ``trace`` the result
    carries one :class:`IterationRecord` per round.
    """
    tree = instance.tree
    m = instance.m
    leaves = tree.leaves
    leaf_index = {leaf: i for i, leaf in enumerate(leaves)}
    engine = engine_class(backend)(
        m, [instance.valuations[leaf].kernel_descriptor() for leaf in leaves]
    )
    full = (1 << m) - 1
    engine.load([0] * len(leaves), full)

    sizes = {i: 0 for i in tree.node_ids}
    sizes[ROOT] = m
    sizes[POOL] = m
    state = MgysState(
        tree=tree,
        engine=engine,
        leaf_index=leaf_index,
        sizes=sizes,
        live_children={i: list(tree.children(i)) for i in tree.internal_nodes},
        live=set(tree.node_ids),
        bundles={i: set() for i in tree.internal_nodes if i != ROOT},
    )

    def node_of(agent: int) -> int:
        return POOL if agent == -1 else leaves[agent]

    records: list[IterationRecord] = []
    live_leaves = len(leaves)
    iterations = 0
    while live_leaves:
        x = select_leaf(state)
        path = engine.shortest_path(leaf_index[x], engine.pool_mask())
        pruned: tuple[int, ...] = ()
        moves_nodes: tuple[tuple[int, int, int], ...] = ()
        before = dict(sizes) if audit else None
        if path is None:
            pruned = _prune(state, x)
            live_leaves -= 1
        else:
            moves = engine.augment(leaf_index[x], path)
            moves_nodes = tuple((g, node_of(frm), node_of(to)) for g, frm, to in moves)
            for g, frm, to in moves_nodes:
                up = state.closures[frm]
                down = state.closures[to]
                for i in down - up:
                    sizes[i] += 1
                    if i in state.bundles:
                        state.bundles[i].add(g)
                for i in up - down:
                    sizes[i] -= 1
                    if i in state.bundles:
                        state.bundles[i].discard(g)
        iterations += 1
        if audit:
            if path is not None:
                _audit_deltas(state, before, x, moves_nodes[-1][1], iterations)
            _audit_check(instance, state, iterations)
        if trace:
            records.append(
                IterationRecord(
                    iterations,
                    x,
                    tuple(path) if path is not None else None,
                    moves_nodes,
                    pruned,
                    sizes[POOL],
                )
            )

    mapping: dict[int, frozenset[int]] = {ROOT: frozenset(range(m))}
    for i, bundle in state.bundles.items():
        mapping[i] = frozenset(bundle)
    for leaf in leaves:
        mapping[leaf] = frozenset(iter_bits(engine.bundle_mask(leaf_index[leaf])))
    alloc = MultilevelAllocation.from_mapping(
        tree.n, mapping, pool=iter_bits(engine.pool_mask())
    )
    return SolveResult("mgys", alloc, iterations, tuple(records) if trace else None)
