"""Fair and efficient division of indivisible items in agent hierarchies.

Agents sit at the leaves of a tree and carry matroid-rank valuations; every
internal node divides the bundle it receives among its children under its
own fairness criterion.  Two solvers are provided: a sequential top-down
pass (`run_sma`) that is optimal for welfare and fairness at every level,
and a faster global swap loop (`run_mgys`) that keeps the welfare guarantee
but may trade away some local fairness.
"""

from ._kernel import BACKEND, available_backends
from .fairness import (
    FairnessCriterion,
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
from .harness import (
    AuditReport,
    GeneratorConfig,
    audit,
    bench,
    generate,
    gys_on_leaves,
    instance_from_json,
    instance_to_json,
    load_instance,
    save_instance,
    solve,
)
from .mgys import run_mgys, select_leaf
from .model import (
    Instance,
    LocalAllocation,
    MultilevelAllocation,
    SolveResult,
    Tree,
    TreeError,
    node_utility,
    restrict,
    utility_profile,
    validate_allocation,
)
from .oracle import OracleBudgetExceeded, OracleVerdict, check_allocation, enumerate_local
from .sma import run_sma
from .valuations import (
    BinaryAdditive,
    BinaryAssignment,
    CappedBinaryAdditive,
    UniformCap,
    Valuation,
    mrf_axiom_check,
)
from .welfare import (
    ExchangeGraph,
    GroupValuation,
    TransferPath,
    achievable_utility,
    path_augment,
    shortest_transfer_path,
    yankee_swap,
)

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "BACKEND",
    "BinaryAdditive",
    "BinaryAssignment",
    "CappedBinaryAdditive",
    "ExchangeGraph",
    "FairnessCriterion",
    "GeneratorConfig",
    "GroupValuation",
    "InfiniteGain",
    "Instance",
    "LocalAllocation",
    "Lorenz",
    "MultilevelAllocation",
    "OracleBudgetExceeded",
    "OracleVerdict",
    "SolveResult",
    "TransferPath",
    "Tree",
    "TreeError",
    "UniformCap",
    "UtilityVector",
    "Valuation",
    "WeightedLeximin",
    "WeightedNash",
    "WeightedPMeans",
    "achievable_utility",
    "audit",
    "available_backends",
    "bench",
    "check_allocation",
    "enumerate_local",
    "generate",
    "gys_on_leaves",
    "instance_from_json",
    "instance_to_json",
    "lex_dominates",
    "load_instance",
    "lorenz_dominates",
    "mrf_axiom_check",
    "node_utility",
    "parse_criterion",
    "path_augment",
    "restrict",
    "run_mgys",
    "run_sma",
    "save_instance",
    "select_leaf",
    "shortest_transfer_path",
    "solve",
    "utility_profile",
    "validate_allocation",
    "yankee_swap",
]
