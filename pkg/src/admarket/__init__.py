"""Exact equilibrium computation for linear exchange markets.

The package computes market-clearing prices of linear Arrow-Debreu exchange
markets in exact rational arithmetic: an iterative price-update solver driven
by balanced flows, an extraction step that snaps terminal prices to the exact
equilibrium, adversarial instance generators, an independent brute-force
oracle, and a reduction between general and identity-endowment markets.
"""

from .errors import (
    AgentLikesNothing,
    BadU,
    CertificationFailed,
    GivingUp,
    GoodLikedByNobody,
    GoodUnowned,
    InconsistentLift,
    InvalidFactor,
    InvariantViolation,
    MarketValidationError,
    NoEquilibriumFound,
    NoSurplus,
    NotIrreducible,
    OddN,
    RankDeficient,
    TooSmallN,
)
from .extract import build_canonical_system, extract_equilibrium, solve_linear
from .flow import EqualityFlow, balanced_flow, is_balanced, max_flow
from .instances import (
    BlocksLayout,
    BlockSpec,
    gen_hard_blocks,
    gen_hard_chain,
    gen_random,
)
from .market import (
    EqualityNetwork,
    MarketInstance,
    build_equality_network,
    check_irreducible,
    demand_edges,
    interest_digraph,
    validate_instance,
)
from .oracle import (
    CertificateReport,
    Violation,
    balanced_surpluses_reference,
    check_equilibrium,
    oracle_equilibrium,
)
from .rationals import Rat, format_rational, parse_rational
from .reduction import ReductionMap, lift_solution, reduce_to_special
from .solver import (
    Policy,
    SolveResult,
    SolveStatus,
    SolverConfig,
    SolveTrace,
    apply_update,
    classify_agents,
    compute_candidates,
    default_epsilon,
    select_high_surplus_set,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AgentLikesNothing",
    "BadU",
    "BlockSpec",
    "BlocksLayout",
    "CertificateReport",
    "CertificationFailed",
    "EqualityFlow",
    "EqualityNetwork",
    "GivingUp",
    "GoodLikedByNobody",
    "GoodUnowned",
    "InconsistentLift",
    "InvalidFactor",
    "InvariantViolation",
    "MarketInstance",
    "MarketValidationError",
    "NoEquilibriumFound",
    "NoSurplus",
    "NotIrreducible",
    "OddN",
    "Policy",
    "RankDeficient",
    "Rat",
    "ReductionMap",
    "SolveResult",
    "SolveStatus",
    "SolveTrace",
    "SolverConfig",
    "TooSmallN",
    "Violation",
    "apply_update",
    "balanced_flow",
    "balanced_surpluses_reference",
    "build_canonical_system",
    "build_equality_network",
    "check_equilibrium",
    "check_irreducible",
    "classify_agents",
    "compute_candidates",
    "default_epsilon",
    "demand_edges",
    "extract_equilibrium",
    "format_rational",
    "gen_hard_blocks",
    "gen_hard_chain",
    "gen_random",
    "interest_digraph",
    "is_balanced",
    "lift_solution",
    "max_flow",
    "oracle_equilibrium",
    "parse_rational",
    "reduce_to_special",
    "select_high_surplus_set",
    "solve",
    "solve_linear",
    "validate_instance",
]
