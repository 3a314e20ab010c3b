"""Instances end to end: generation, serialization, the flat baseline,
audits, and the benchmark runner behind the CLI."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import random
import signal
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields as dataclass_fields
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from . import oracle as oracle_mod
from .fairness import FairnessCriterion, Lorenz, parse_criterion
from .mgys import run_mgys
from .model import (
    POOL,
    ROOT,
    Instance,
    MultilevelAllocation,
    SolveResult,
    Tree,
    node_utility,
)
from .sma import run_sma
from .valuations import (
    BinaryAdditive,
    BinaryAssignment,
    CappedBinaryAdditive,
    UniformCap,
    Valuation,
)
from .welfare import proxy_valuation, yankee_swap

__all__ = [
    "ALGORITHMS",
    "FAMILIES",
    "AuditReport",
    "BENCH_CSV_HEADER",
    "GeneratorConfig",
    "NodeAudit",
    "aggregate_rows",
    "allocation_from_json",
    "allocation_to_json",
    "audit",
    "bench",
    "generate",
    "gys_on_leaves",
    "instance_from_json",
    "instance_to_json",
    "load_instance",
    "read_rows_csv",
    "save_instance",
    "solve",
    "write_rows_csv",
]

FAMILIES = (
    "binary_additive",
    "capped_binary_additive",
    "uniform_cap",
    "binary_assignment",
)
ALGORITHMS = ("sma", "mgys", "gys-leaves")

#: tags drawn when a config asks for random criteria
RANDOM_CRITERIA = ("lorenz", "wleximin", "wnash", "wpmeans:1/2", "wpmeans:-1")

SEED_ENV_VAR = "HIERFAIR_SEED"


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class GeneratorConfig:
    """Random-instance recipe; `generate` is a pure function of it."""

    tree: str = "balanced"
    n: int = 7
    m: int = 5
    p: float = 0.5
    pref: str = "indep"
    rho: float = 0.8
    seed: int = 1
    families: tuple[str, ...] = FAMILIES
    criteria: str = "lorenz"
    weight_range: tuple[int, int] = (1, 5)

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "weight_range", tuple(self.weight_range))
        if self.tree not in ("balanced", "comb"):
            raise ValueError(f"unknown tree shape {self.tree!r}")
        if self.tree == "comb" and (self.n < 3 or self.n % 2 == 0):
            raise ValueError("a comb tree needs an odd node count of at least 3")
        if self.n < 2:
            raise ValueError("need at least a root and one leaf")
        if self.m < 1:
            raise ValueError("need at least one item")
        if not 0 < self.p <= 1:
            raise ValueError("approval probability must be in (0, 1]")
        if not 0 <= self.rho <= 1:
            raise ValueError("correlation must be in [0, 1]")
        if self.pref not in ("indep", "corr"):
            raise ValueError(f"unknown preference mode {self.pref!r}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ValueError(f"unknown valuation families {bad}")
        lo, hi = self.weight_range
        if lo < 1 or hi < lo:
            raise ValueError("weight range must be positive integers lo <= hi")
        if self.criteria != "random":
            parse_criterion(self.criteria)


def _tree_parents(shape: str, n: int) -> dict[int, int]:
    if shape == "balanced":
        return {i: (i + 1) // 3 for i in range(2, n + 1)}
    # comb: even ids are spine leaves under the previous internal, odd ids
    # continue the spine; the last odd node becomes the second terminal leaf
    return {i: i - 1 if i % 2 == 0 else i - 2 for i in range(2, n + 1)}


def _approvals(rng: random.Random, m: int, p: float, ref: Optional[list[bool]], rho: float) -> frozenset[int]:
    out = []
    for g in range(m):
        if ref is not None:
            keep = rng.random() < rho
            hit = ref[g] if keep else rng.random() < p
        else:
            hit = rng.random() < p
        if hit:
            out.append(g)
    return frozenset(out)


def generate(config: GeneratorConfig) -> Instance:
    """Draw a random instance; deterministic in the config (including seed).

    One RNG stream, consumed in a fixed order: node weights, criteria,
    the reference approval column (correlated mode), then per leaf the
    family choice and its payload.
    """
    rng = random.Random(config.seed)
    n, m = config.n, config.m
    parents = _tree_parents(config.tree, n)
    lo, hi = config.weight_range
    weights = {i: rng.randint(lo, hi) for i in range(1, n + 1)}

    children: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for i, par in parents.items():
        children[par].append(i)
    internal = [i for i in range(1, n + 1) if children[i]]
    if config.criteria == "random":
        criteria = {i: parse_criterion(rng.choice(RANDOM_CRITERIA)) for i in internal}
    else:
        crit = parse_criterion(config.criteria)
        criteria = {i: crit for i in internal}

    ref = None
    if config.pref == "corr":
        ref = [rng.random() < config.p for _ in range(m)]

    leaves = [i for i in range(1, n + 1) if not children[i]]
    valuations: dict[int, Valuation] = {}
    for leaf in leaves:
        family = rng.choice(config.families)
        if family == "binary_additive":
            valuations[leaf] = BinaryAdditive(_approvals(rng, m, config.p, ref, config.rho))
        elif family == "capped_binary_additive":
            approved = _approvals(rng, m, config.p, ref, config.rho)
            cap = rng.randint(1, max(1, len(approved)))
            valuations[leaf] = CappedBinaryAdditive(approved, cap)
        elif family == "uniform_cap":
            valuations[leaf] = UniformCap(rng.randint(1, m))
        else:
            k = rng.randint(2, 25)
            rows = tuple(
                _approvals(rng, m, config.p, ref, config.rho) for _ in range(k)
            )
            valuations[leaf] = BinaryAssignment(rows)

    tree = Tree(parents, weights, criteria)
    meta = {"generator": config_to_json(config), "seed": config.seed}
    return Instance(tree, m, valuations, meta)


def config_to_json(config: GeneratorConfig) -> dict:
    return {
        "tree": config.tree,
        "n": config.n,
        "m": config.m,
        "p": config.p,
        "pref": config.pref,
        "rho": config.rho,
        "seed": config.seed,
        "families": list(config.families),
        "criteria": config.criteria,
        "weight_range": list(config.weight_range),
    }


def config_from_json(data: Mapping) -> GeneratorConfig:
    known = {f.name for f in dataclass_fields(GeneratorConfig)}
    kwargs = {k: v for k, v in data.items() if k in known}
    if "families" in kwargs:
        kwargs["families"] = tuple(kwargs["families"])
    if "weight_range" in kwargs:
        kwargs["weight_range"] = tuple(kwargs["weight_range"])
    return GeneratorConfig(**kwargs)


# ---------------------------------------------------------------------------
# JSON serialization


def _weight_json(w: Fraction):
    if w.denominator == 1:
        return int(w)
    return f"{w.numerator}/{w.denominator}"


def instance_to_json(instance: Instance) -> dict:
    tree = instance.tree
    nodes = []
    for i in tree.node_ids:
        row = {
            "id": i,
            "parent": tree.parent(i),
            "weight": _weight_json(tree.weight(i)),
        }
        if not tree.is_leaf(i):
            row["criterion"] = tree.criterion(i).tag
        nodes.append(row)
    leaf_valuations = {}
    for leaf in tree.leaves:
        val = instance.valuations[leaf]
        if isinstance(val, BinaryAdditive):
            payload = {"type": "binary_additive", "approved": sorted(val.approved)}
        elif isinstance(val, CappedBinaryAdditive):
            payload = {
                "type": "capped_binary_additive",
                "approved": sorted(val.approved),
                "cap": val.cap,
            }
        elif isinstance(val, UniformCap):
            payload = {"type": "uniform_cap", "cap": val.cap}
        elif isinstance(val, BinaryAssignment):
            payload = {
                "type": "binary_assignment",
                "subagents": [sorted(row) for row in val.subagents],
            }
        else:
            raise ValueError(f"cannot serialize valuation {val!r}")
        leaf_valuations[str(leaf)] = payload
    return {
        "m": instance.m,
        "nodes": nodes,
        "leaf_valuations": leaf_valuations,
        "meta": dict(instance.meta),
    }


def _item_id(token, names: Optional[dict]) -> int:
    if isinstance(token, int):
        return token
    if names is not None and token in names:
        return names[token]
    raise ValueError(f"unknown item {token!r}")


def instance_from_json(data: Mapping) -> Instance:
    m = data["m"]
    names = None
    if "items" in data and data["items"] is not None:
        labels = list(data["items"])
        if len(labels) != m:
            raise ValueError("item name list must have length m")
        names = {name: i for i, name in enumerate(labels)}
    parents: dict[int, int] = {}
    weights: dict[int, Fraction] = {}
    criteria: dict[int, FairnessCriterion] = {}
    for row in data["nodes"]:
        i = int(row["id"])
        par = row.get("parent")
        if par is not None:
            parents[i] = int(par)
        weights[i] = Fraction(str(row.get("weight", 1)))
        if row.get("criterion") is not None:
            criteria[i] = parse_criterion(row["criterion"])
    tree = Tree(parents, weights, criteria)
    valuations: dict[int, Valuation] = {}
    for key, payload in data["leaf_valuations"].items():
        leaf = int(key)
        kind = payload["type"]
        if kind == "binary_additive":
            valuations[leaf] = BinaryAdditive(
                frozenset(_item_id(t, names) for t in payload["approved"])
            )
        elif kind == "capped_binary_additive":
            valuations[leaf] = CappedBinaryAdditive(
                frozenset(_item_id(t, names) for t in payload["approved"]),
                int(payload["cap"]),
            )
        elif kind == "uniform_cap":
            valuations[leaf] = UniformCap(int(payload["cap"]))
        elif kind == "binary_assignment":
            valuations[leaf] = BinaryAssignment(
                tuple(
                    frozenset(_item_id(t, names) for t in row)
                    for row in payload["subagents"]
                )
            )
        else:
            raise ValueError(f"unknown valuation type {kind!r}")
    return Instance(tree, m, valuations, dict(data.get("meta", {})))


def save_instance(instance: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_json(instance), fh, indent=2)
        fh.write("\n")


def load_instance(path: str) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_json(json.load(fh))


def allocation_to_json(instance: Instance, result: SolveResult) -> dict:
    tree = instance.tree
    alloc = result.allocation
    held = set()
    for leaf in tree.leaves:
        held |= alloc.bundle(leaf)
    discarded = sorted(set(range(instance.m)) - held)
    return {
        "bundles": {str(i): sorted(alloc.bundle(i)) for i in tree.node_ids},
        "utilities": {
            str(i): node_utility(tree, instance.valuations, alloc, i)
            for i in tree.node_ids
        },
        "discarded": discarded,
        "algorithm": result.algorithm,
        "seed": instance.meta.get("seed"),
        "iterations": result.iterations,
    }


def allocation_from_json(instance: Instance, data: Mapping) -> MultilevelAllocation:
    bundles = {int(k): frozenset(v) for k, v in data.get("bundles", {}).items()}
    pool = bundles.pop(POOL, frozenset(data.get("discarded", ())))
    return MultilevelAllocation.from_mapping(instance.tree.n, bundles, pool=pool)


# ---------------------------------------------------------------------------
# solving


def solve(
    instance: Instance,
    algorithm: str,
    backend: Optional[str] = None,
    trace: bool = False,
) -> SolveResult:
    """Run one of the three algorithms on an instance."""
    if algorithm == "sma":
        return run_sma(instance, backend=backend)
    if algorithm == "mgys":
        return run_mgys(instance, backend=backend, trace=trace)
    if algorithm == "gys-leaves":
        return gys_on_leaves(instance, backend=backend)
    raise ValueError(f"unknown algorithm {algorithm!r} (expected one of {ALGORITHMS})")


def gys_on_leaves(
    instance: Instance,
    criterion: Optional[FairnessCriterion] = None,
    backend: Optional[str] = None,
) -> SolveResult:
    """Flat baseline: one swap loop over all leaves, hierarchy ignored.

    Internal bundles are then set to the union of their descendant leaves'
    bundles (root completed to the full item set), so the output is a valid
    multilevel allocation; fairness inside sibling groups is whatever the
    flat run happened to produce.  The criterion defaults to the egalitarian
    one the experiments use.
    """
    if criterion is None:
        criterion = Lorenz()
    tree = instance.tree
    leaves = tree.leaves
    result = yankee_swap(
        leaves,
        [tree.weight(leaf) for leaf in leaves],
        [instance.valuations[leaf] for leaf in leaves],
        range(instance.m),
        criterion,
        instance.m,
        backend=backend,
    )
    bundles: dict[int, frozenset[int]] = {}
    for leaf, share in zip(leaves, result.allocation.shares):
        bundles[leaf] = share
    for i in reversed(tree.internal_nodes):
        merged = frozenset()
        for c in tree.children(i):
            merged |= bundles[c]
        bundles[i] = merged
    bundles[ROOT] = frozenset(range(instance.m))
    alloc = MultilevelAllocation.from_mapping(tree.n, bundles)
    return SolveResult("gys-leaves", alloc, result.iterations)


# ---------------------------------------------------------------------------
# audit


@dataclass(frozen=True)
class NodeAudit:
    node: int
    failed: bool
    actual_vector: tuple[int, ...]
    best_vector: tuple[int, ...]
    actual_sizes: tuple[int, ...]
    best_sizes: tuple[int, ...]
    err2: int

    def to_json(self) -> dict:
        return {
            "node": self.node,
            "failed": self.failed,
            "actual_vector": list(self.actual_vector),
            "best_vector": list(self.best_vector),
            "actual_sizes": list(self.actual_sizes),
            "best_sizes": list(self.best_sizes),
            "err2": self.err2,
        }


@dataclass(frozen=True)
class AuditReport:
    """Fairness audit of an allocation against per-node re-optimization.

    err1: some internal node's children-utility vector is beaten, under the
    node's criterion, by redividing that node's bundle.  err2: over the
    failing nodes, the total absolute bundle-size deviation from the
    redivision (each misplaced item counts once leaving and once arriving,
    so the total is even).  discarded: items no leaf received.
    """

    err1: bool
    err2: int
    discarded: int
    nodes: tuple[NodeAudit, ...]

    def to_json(self) -> dict:
        return {
            "err1": self.err1,
            "err2": self.err2,
            "discarded": self.discarded,
            "nodes": [n.to_json() for n in self.nodes],
        }


def audit(
    instance: Instance,
    alloc: MultilevelAllocation,
    use_oracle: bool = False,
    budget: int = oracle_mod.DEFAULT_BUDGET,
    backend: Optional[str] = None,
) -> AuditReport:
    """Re-divide every internal node's bundle and compare.

    The incumbent vector is what the children actually realize downstream;
    the challenger re-runs the one-level swap (or, with `use_oracle`,
    exhaustive enumeration) on the node's bundle with best-achievable
    subtree utilities.  A node fails when the challenger's vector is
    strictly better under the node's criterion.
    """
    tree = instance.tree
    vals = instance.valuations
    tables = None
    if use_oracle:
        tables = oracle_mod.achievable_table(instance, budget)
    reports = []
    err2_total = 0
    for i in tree.internal_nodes:
        kids = tree.children(i)
        weights = tuple(tree.weight(c) for c in kids)
        crit = tree.criterion(i)
        bundle = alloc.bundle(i)
        actual_vec = tuple(node_utility(tree, vals, alloc, c) for c in kids)
        actual_sizes = tuple(len(alloc.bundle(c)) for c in kids)
        if use_oracle:
            best_vec, best_shares = oracle_mod.best_local_split(
                instance, i, bundle, budget=budget, tables=tables
            )
            best_sizes = tuple(mask.bit_count() for mask in best_shares)
        else:
            redo = yankee_swap(
                kids,
                weights,
                [proxy_valuation(tree, vals, c) for c in kids],
                bundle,
                crit,
                instance.m,
                backend=backend,
            )
            best_sizes = tuple(len(s) for s in redo.allocation.shares)
            best_vec = best_sizes  # swap bundles are non-redundant
        failed = crit.compare_values(best_vec, actual_vec, weights) > 0
        err2 = sum(abs(a - b) for a, b in zip(actual_sizes, best_sizes)) if failed else 0
        err2_total += err2
        reports.append(
            NodeAudit(i, failed, actual_vec, best_vec, actual_sizes, best_sizes, err2)
        )
    held = set()
    for leaf in tree.leaves:
        held |= alloc.bundle(leaf)
    discarded = instance.m - len(held)
    return AuditReport(any(r.failed for r in reports), err2_total, discarded, tuple(reports))


# ---------------------------------------------------------------------------
# bench


BENCH_CSV_HEADER = (
    "config_id",
    "instance_id",
    "algorithm",
    "runtime_ms",
    "err1",
    "err2",
    "discarded",
    "timeout",
)

#: spread between the per-instance seeds of one config
SEED_STRIDE = 1000003


class _Timeout(Exception):
    pass


def _alarm_handler(signum, frame):
    raise _Timeout()


def _bench_task(payload: dict) -> dict:
    config = config_from_json(payload["config"])
    idx = payload["instance_id"]
    algorithm = payload["algorithm"]
    timeout = payload["timeout"]
    seed = config.seed + SEED_STRIDE * idx
    instance = generate(
        GeneratorConfig(**{**config_to_json(config), "seed": seed})
    )
    row = {
        "config_id": payload["config_id"],
        "instance_id": idx,
        "algorithm": algorithm,
        "runtime_ms": None,
        "err1": None,
        "err2": None,
        "discarded": None,
        "timeout": False,
    }
    old_handler = None
    if timeout is not None:
        old_handler = signal.signal(signal.SIGALRM, _alarm_handler)
        signal.setitimer(signal.ITIMER_REAL, timeout)
    try:
        start = time.perf_counter()
        result = solve(instance, algorithm)
        elapsed = time.perf_counter() - start
        report = audit(instance, result.allocation)
        row["runtime_ms"] = elapsed * 1000.0
        row["err1"] = report.err1
        row["err2"] = report.err2
        row["discarded"] = report.discarded
    except _Timeout:
        row["timeout"] = True
        row["runtime_ms"] = timeout * 1000.0
    finally:
        if timeout is not None:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, old_handler)
    return row


def bench(
    config: Mapping,
    jobs: int = 1,
    timeout: Optional[float] = None,
) -> list[dict]:
    """Run the benchmark matrix described by a config mapping.

    The mapping holds "configs": a list of generator configs extended with
    "id", "count" and optionally "algorithms"; top-level "algorithms" and
    "timeout" provide defaults (the `timeout` argument overrides both).
    One row per (config, instance, algorithm); a row whose run exceeds the
    timeout is marked rather than raised.  HIERFAIR_SEED, when set,
    overrides every config's base seed.
    """
    if timeout is None:
        timeout = config.get("timeout")
    default_algorithms = tuple(config.get("algorithms", ALGORITHMS))
    env_seed = os.environ.get(SEED_ENV_VAR)
    tasks = []
    for pos, entry in enumerate(config["configs"]):
        entry = dict(entry)
        config_id = str(entry.pop("id", pos))
        count = int(entry.pop("count", 1))
        algorithms = tuple(entry.pop("algorithms", default_algorithms))
        if env_seed is not None:
            entry["seed"] = int(env_seed)
        gen = config_from_json(entry)
        for idx in range(count):
            for algorithm in algorithms:
                if algorithm not in ALGORITHMS:
                    raise ValueError(f"unknown algorithm {algorithm!r}")
                tasks.append(
                    {
                        "config": config_to_json(gen),
                        "config_id": config_id,
                        "instance_id": idx,
                        "algorithm": algorithm,
                        "timeout": timeout,
                    }
                )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bench_task, tasks))
    else:
        rows = [_bench_task(t) for t in tasks]
    rows.sort(key=lambda r: (r["config_id"], r["instance_id"], r["algorithm"]))
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(rows: Iterable[dict], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(BENCH_CSV_HEADER)
    for row in rows:
        writer.writerow([_cell(row[col]) for col in BENCH_CSV_HEADER])


def read_rows_csv(fh) -> list[dict]:
    reader = csv.reader(fh)
    header = next(reader)
    if tuple(header) != BENCH_CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for raw in reader:
        row = dict(zip(BENCH_CSV_HEADER, raw))
        parsed = {
            "config_id": row["config_id"],
            "instance_id": int(row["instance_id"]),
            "algorithm": row["algorithm"],
            "runtime_ms": float(row["runtime_ms"]) if row["runtime_ms"] else None,
            "err1": row["err1"] == "true" if row["err1"] else None,
            "err2": int(row["err2"]) if row["err2"] else None,
            "discarded": int(row["discarded"]) if row["discarded"] else None,
            "timeout": row["timeout"] == "true",
        }
        out.append(parsed)
    return out


def rows_csv_text(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    write_rows_csv(rows, buf)
    return buf.getvalue()


def aggregate_rows(rows: Sequence[dict]) -> list[dict]:
    """Per (config, algorithm): mean/stddev runtime, err1 rate, mean err2
    over failing instances, mean discarded, timeout count."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["config_id"], row["algorithm"]), []).append(row)
    out = []
    for (config_id, algorithm), grp in sorted(groups.items()):
        done = [r for r in grp if not r["timeout"]]
        times = [r["runtime_ms"] for r in done]
        mean_t = sum(times) / len(times) if times else None
        std_t = (
            math.sqrt(sum((t - mean_t) ** 2 for t in times) / len(times))
            if times
            else None
        )
        failing = [r for r in done if r["err1"]]
        out.append(
            {
                "config_id": config_id,
                "algorithm": algorithm,
                "runs": len(grp),
                "timeouts": sum(1 for r in grp if r["timeout"]),
                "mean_runtime_ms": mean_t,
                "stddev_runtime_ms": std_t,
                "err1_rate": len(failing) / len(done) if done else None,
                "mean_err2_failing": (
                    sum(r["err2"] for r in failing) / len(failing) if failing else 0.0
                ),
                "mean_discarded": (
                    sum(r["discarded"] for r in done) / len(done) if done else None
                ),
            }
        )
    return out
