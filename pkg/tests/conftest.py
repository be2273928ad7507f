"""Shared fixtures: the expensive reference solves, computed once per session.

The chain and blocks runs dominate suite runtime, so every test that needs
them pulls from these session-scoped caches instead of re-solving. Trace
levels are chosen per family: chains carry level-2 traces (exact norm
numerators, sold sets) for the invariant assertions, the blocks run carries
level 1 (per-iteration S/Γ(S) tuples) because only its window structure is
examined and level 2 would retain two six-figure-bit integers per iteration
for 55k+ iterations.
"""

import pytest

from admarket import (
    MarketInstance,
    Policy,
    SolverConfig,
    gen_hard_blocks,
    gen_hard_chain,
    solve,
)
from admarket.rationals import Rat

DESK_EPSILON = Rat(1, 10**12)

# One miniature special-form market whose DM run walks three disjoint
# price-climb phases and ends every climb on an exact tie event, so it
# terminates at a coarse epsilon with exact prices (3, 1, 1, 6, 1).
MINIATURE_U = (
    (2, 1, 1, 0, 1),
    (2, 0, 0, 0, 0),
    (2, 0, 0, 0, 0),
    (1, 0, 0, 2, 0),
    (0, 0, 1, 6, 0),
)

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    """Echo one PASS/FAIL line per acceptance criterion after the run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def chain_solves():
    """(n, U, policy) -> SolveResult for the chain family at desk epsilon."""
    runs = [
        (4, 2, Policy.GENERAL),
        (4, 3, Policy.GENERAL),
        (6, 2, Policy.GENERAL),
        (4, 2, Policy.DGM),
        (6, 2, Policy.DGM),
    ]
    out = {}
    for n, U, pol in runs:
        inst = gen_hard_chain(n, U)
        out[(n, U, pol)] = solve(
            inst,
            SolverConfig(policy=pol, epsilon=DESK_EPSILON, trace_level=2),
        )
    return out


@pytest.fixture(scope="session")
def miniature_solve():
    inst = MarketInstance(
        u=MINIATURE_U,
        w=tuple(tuple(1 if i == j else 0 for j in range(5)) for i in range(5)),
    )
    return inst, solve(
        inst,
        SolverConfig(policy=Policy.DM, epsilon=Rat(1, 1000), trace_level=2),
    )


@pytest.fixture(scope="session")
def blocks_solve():
    inst, layout = gen_hard_blocks(9, 2)
    res = solve(
        inst,
        SolverConfig(policy=Policy.DM, epsilon=DESK_EPSILON, trace_level=1),
    )
    return inst, layout, res
