"""The price-update loop: configuration, statuses, traces, policies."""

import json
import io

import pytest

from admarket import (
    MarketInstance,
    NotIrreducible,
    Policy,
    SolverConfig,
    SolveStatus,
    apply_update,
    balanced_flow,
    build_equality_network,
    check_equilibrium,
    classify_agents,
    compute_candidates,
    default_epsilon,
    gen_hard_chain,
    gen_random,
    oracle_equilibrium,
    reduce_to_special,
    select_high_surplus_set,
    solve,
)
from admarket.errors import InvalidFactor
from admarket.rationals import Rat

DESK = Rat(1, 10**12)


# ---------------------------------------------------------------------------
# configuration validation
# ---------------------------------------------------------------------------


def test_config_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        SolverConfig(epsilon=Rat(0))
    with pytest.raises(ValueError):
        SolverConfig(epsilon=Rat(-1, 2))


def test_config_rejects_small_price_cap():
    with pytest.raises(ValueError):
        SolverConfig(max_price_bits=32)
    SolverConfig(max_price_bits=64)  # the floor itself is fine


def test_config_rejects_small_R():
    with pytest.raises(ValueError):
        SolverConfig(R=10)


def test_config_coerces_policy_strings():
    assert SolverConfig(policy="dm").policy is Policy.DM


def test_default_epsilon_formula():
    inst = MarketInstance(u=((2, 1), (1, 2)), w=((1, 0), (0, 1)))
    s, uw = 4, 2  # n+m and U·W
    assert default_epsilon(inst) == Rat(1, 8 * s ** (4 * s) * uw ** (3 * s))


def test_solve_rejects_reducible_instances():
    closed = MarketInstance(u=((1, 0), (0, 1)), w=((1, 0), (0, 1)))
    with pytest.raises(NotIrreducible):
        solve(closed)


# ---------------------------------------------------------------------------
# statuses
# ---------------------------------------------------------------------------


def test_converged_prices_are_certified():
    inst = MarketInstance(u=((2, 1), (1, 2)), w=((1, 0), (0, 1)))
    res = solve(inst)
    assert res.status is SolveStatus.CONVERGED and res.converged
    assert res.prices is not None
    assert check_equilibrium(inst, res.prices).ok
    assert res.flow.is_valid()
    # this market has a whole segment of equilibrium ratios; both ends certify
    op, _ = oracle_equilibrium(inst)
    assert check_equilibrium(inst, op).ok


def test_iteration_cap_keeps_terminal_state():
    inst = gen_hard_chain(4, 2)
    res = solve(inst, SolverConfig(epsilon=DESK, max_iterations=5, trace_level=0))
    assert res.status is SolveStatus.ITERATION_CAP
    assert res.iterations == 5
    assert res.prices is None and res.flow is None
    assert res.extraction_error  # the early snap cannot certify yet
    assert len(res.terminal_prices) == 4
    assert res.terminal_flow.is_valid()


def test_extraction_failed_on_absurd_epsilon():
    # epsilon = 1 stops before the first iteration; the initial uniform
    # prices under-determine the canonical system
    inst = gen_hard_chain(4, 2)
    res = solve(inst, SolverConfig(epsilon=Rat(1), trace_level=0))
    assert res.status is SolveStatus.EXTRACTION_FAILED
    assert res.iterations == 0
    assert res.prices is None
    assert res.extraction_error


def test_precision_cap_with_failed_snap():
    # a reduced instance mid-climb: the cap fires long before any event, and
    # the terminal network cannot pin all prices yet
    inst = gen_random(n=3, m=3, U=3, W=3, density=0.7, seed=107)
    red, _ = reduce_to_special(inst)
    res = solve(
        red,
        SolverConfig(epsilon=DESK, max_price_bits=2_000, trace_level=0),
    )
    assert res.status is SolveStatus.PRECISION_CAP
    assert res.prices is None
    assert res.extraction_error


def test_precision_cap_snap_can_still_certify():
    # a crossing cascade doubles representation size per iteration; the cap
    # stops it, and the snap still finds the exact equilibrium because the
    # co-moving price ties survive every update
    inst = gen_random(n=3, m=3, U=3, W=3, density=0.7, seed=7)
    res = solve(
        inst,
        SolverConfig(epsilon=DESK, max_price_bits=20_000, trace_level=0),
    )
    assert res.status is SolveStatus.CONVERGED
    assert res.prices is not None
    op, _ = oracle_equilibrium(inst)
    assert all(
        res.prices[j] * op[0] == op[j] * res.prices[0] for j in range(inst.m)
    )
    # without the cascade cap this run would need ~80 doublings of the
    # price representation to reach epsilon; it must stop far earlier
    assert res.iterations < 1000


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def test_trace_levels_control_record_payload():
    inst = gen_hard_chain(4, 2)
    lvl0 = solve(inst, SolverConfig(epsilon=DESK, max_iterations=8, trace_level=0))
    assert lvl0.trace.records == [] and lvl0.trace.iterations == 8

    lvl2 = solve(inst, SolverConfig(epsilon=DESK, max_iterations=8, trace_level=2))
    rec = lvl2.trace.records[-1]
    assert rec.l1_num is not None and rec.scale is not None
    assert rec.sold is not None and rec.price_bits is not None
    assert rec.prices is None  # level 3 payload stays off

    lvl3 = solve(inst, SolverConfig(epsilon=DESK, max_iterations=8, trace_level=3))
    rec = lvl3.trace.records[-1]
    assert rec.prices is not None and rec.surpluses is not None


def test_trace_sink_streams_jsonl():
    inst = gen_hard_chain(4, 2)
    sink = io.StringIO()
    res = solve(
        inst,
        SolverConfig(epsilon=DESK, max_iterations=12, trace_level=1, trace_sink=sink),
    )
    lines = [json.loads(s) for s in sink.getvalue().splitlines()]
    assert len(lines) == res.iterations == 12
    assert lines[0]["iteration"] == 1
    assert {"x", "x_name", "S", "gamma"} <= set(lines[0])


def test_trace_counters_accumulate():
    inst = gen_hard_chain(4, 2)
    res = solve(inst, SolverConfig(epsilon=DESK, trace_level=0))
    tr = res.trace
    assert tr.iterations == res.iterations
    assert tr.light_steps + tr.heavy_steps == tr.iterations
    assert tr.network_changes >= 1


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


def test_policies_agree_on_chain_prices_but_not_effort():
    inst = gen_hard_chain(4, 2)
    general = solve(inst, SolverConfig(epsilon=DESK, trace_level=0))
    dgm = solve(inst, SolverConfig(policy=Policy.DGM, epsilon=DESK, trace_level=0))
    dm = solve(inst, SolverConfig(policy=Policy.DM, epsilon=DESK, trace_level=0))
    assert general.prices == dgm.prices == dm.prices
    # the surplus-prefix selection with larger steps halves the iteration count
    assert general.iterations == 2663
    assert dgm.iterations == 1332
    assert dgm.iterations < general.iterations


def test_miniature_exact_prices(miniature_solve):
    inst, res = miniature_solve
    assert res.status is SolveStatus.CONVERGED
    assert res.iterations == 18634
    assert res.prices == (Rat(3), Rat(1), Rat(1), Rat(6), Rat(1))
    assert res.trace.network_changes == 3
    assert check_equilibrium(inst, res.prices, res.flow.as_matrix()).ok


# ---------------------------------------------------------------------------
# step primitives via the public wrappers
# ---------------------------------------------------------------------------


def _chain_state():
    inst = gen_hard_chain(4, 2)
    net = build_equality_network(inst, (1, 1, 1, 1))
    return inst, net, balanced_flow(net)


def test_select_classify_candidates_round_trip():
    inst, net, flow = _chain_state()
    S, gamma = select_high_surplus_set(inst, net, flow)
    assert len(S) >= 1
    assert gamma == frozenset().union(*(net.edges[i] for i in S))
    types = classify_agents(inst, net, flow, S)
    assert set(types.t1) | set(types.t2) == set(S)
    cand = compute_candidates(inst, net, flow, S)
    name, x = cand.choose()
    assert x > 1
    assert name in ("x_eq", "x_23", "x_24", "x_13", "x_2", "x_max")


def test_apply_update_scales_gamma_only():
    inst, net, flow = _chain_state()
    S, gamma = select_high_surplus_set(inst, net, flow)
    cand = compute_candidates(inst, net, flow, S)
    _, x = cand.choose()
    new_prices, new_flow = apply_update(inst, net, flow, S, gamma, x)
    for j in range(inst.m):
        expected = net.prices[j] * (x if j in gamma else 1)
        assert new_prices[j] == expected
    assert new_flow.is_valid()


def test_apply_update_rejects_silly_factors():
    inst, net, flow = _chain_state()
    S, gamma = select_high_surplus_set(inst, net, flow)
    with pytest.raises(InvalidFactor):
        apply_update(inst, net, flow, S, gamma, Rat(1))
    with pytest.raises(InvalidFactor):
        apply_update(inst, net, flow, S, gamma, Rat(3), x_max=Rat(2))
