"""Flow kernels: max flow, balanced flow, certificates, canonical choices."""

import itertools
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from admarket import (
    EqualityFlow,
    EqualityNetwork,
    balanced_flow,
    balanced_surpluses_reference,
    is_balanced,
    max_flow,
)
from admarket.flow import _max_flow_int, balanced_flow_int
from admarket.rationals import Rat


def random_network(seed: int, n_max: int = 5, m_max: int = 5) -> EqualityNetwork:
    """Deterministic small network: integer-ish budgets/values, random edges.

    Every agent keeps at least one edge and every good at least one incident
    agent, so the network never has trivially dead rows.
    """
    rng = random.Random(seed)
    n = rng.randint(1, n_max)
    m = rng.randint(1, m_max)
    budgets = [Rat(rng.randint(1, 6), rng.choice((1, 1, 2))) for _ in range(n)]
    values = [Rat(rng.randint(1, 6), rng.choice((1, 1, 3))) for _ in range(m)]
    edges = []
    for _ in range(n):
        k = rng.randint(1, m)
        edges.append(tuple(sorted(rng.sample(range(m), k))))
    for j in range(m):
        if all(j not in e for e in edges):
            i = rng.randrange(n)
            edges[i] = tuple(sorted(set(edges[i]) | {j}))
    return EqualityNetwork(budgets=budgets, values=values, edges=edges)


def cut_bound(net: EqualityNetwork) -> Rat:
    """Max-flow value by subset enumeration (min cut over agent subsets)."""
    n = net.n
    best_excess = Rat(0)
    for r in range(1, n + 1):
        for A in itertools.combinations(range(n), r):
            goods = set()
            for i in A:
                goods.update(net.edges[i])
            excess = sum((net.budgets[i] for i in A), Rat(0)) - sum(
                (net.values[j] for j in goods), Rat(0)
            )
            if excess > best_excess:
                best_excess = excess
    return net.total_budget() - best_excess


@given(st.integers(0, 10**9))
@settings(max_examples=60, deadline=None)
def test_max_flow_value_matches_cut_bound(seed):
    net = random_network(seed)
    flow = max_flow(net)
    assert flow.is_valid()
    assert flow.value() == cut_bound(net)


@given(st.integers(0, 10**9))
@settings(max_examples=60, deadline=None)
def test_balanced_flow_certificate(seed):
    net = random_network(seed)
    flow = balanced_flow(net)
    assert flow.is_valid()
    assert is_balanced(net, flow)


@given(st.integers(0, 10**9))
@settings(max_examples=40, deadline=None)
def test_balanced_flow_matches_enumeration_reference(seed):
    net = random_network(seed, n_max=4, m_max=4)
    flow = balanced_flow(net)
    assert flow.agent_surpluses() == balanced_surpluses_reference(net)


@given(st.integers(0, 10**9), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_balanced_flow_agent_order_invariance(seed, perm_seed):
    """The surplus vector is the same after permuting the agent rows."""
    net = random_network(seed)
    flow = balanced_flow(net)
    order = list(range(net.n))
    random.Random(perm_seed).shuffle(order)
    permuted = EqualityNetwork(
        budgets=[net.budgets[i] for i in order],
        values=net.values,
        edges=[net.edges[i] for i in order],
    )
    pflow = balanced_flow(permuted)
    assert [pflow.agent_surplus(k) for k in range(net.n)] == [
        flow.agent_surplus(order[k]) for k in range(net.n)
    ]


@given(
    st.integers(0, 10**9),
    st.lists(
        st.lists(st.integers(-2, 8), min_size=0, max_size=4),
        min_size=0,
        max_size=4,
    ),
)
@settings(max_examples=40, deadline=None)
def test_threshold_seeds_do_not_change_the_flow(seed, junk_seeds):
    """Any seed sets — stale, empty, out of range — leave the result intact."""
    net = random_network(seed)
    nums_b, den_b = _as_ints(net.budgets)
    nums_v, den_v = _as_ints(net.values, den_b)
    base = balanced_flow_int(nums_b, nums_v, net.edges)
    seeded = balanced_flow_int(nums_b, nums_v, net.edges, seeds=junk_seeds)
    assert base[:4] == seeded[:4]


def _as_ints(qs, extra_den: int = 1):
    from admarket.rationals import common_denominator, lcm_all

    nums, den = common_denominator(list(qs))
    L = lcm_all([den, extra_den])
    return [x * (L // den) for x in nums], L


def test_keep_sold_picks_the_requested_tie():
    # one agent, budget 1, two unit goods: either good may absorb the money
    for target in (0, 1):
        fs, fe, ft, K, _ = balanced_flow_int(
            [1], [1, 1], [(0, 1)], K=1, keep_sold=[target]
        )
        assert ft[target] == 1
        assert fs == [1]


def test_keep_sold_never_alters_surpluses():
    rng = random.Random(7)
    for seed in range(30):
        net = random_network(seed)
        nums_b, den = _as_ints(net.budgets)
        nums_v, den2 = _as_ints(net.values, den)
        base = balanced_flow_int(nums_b, nums_v, net.edges)
        want = tuple(rng.sample(range(net.m), rng.randint(0, net.m)))
        kept = balanced_flow_int(nums_b, nums_v, net.edges, keep_sold=want)
        assert base[0] == kept[0]  # agent totals identical
        assert sum(base[2]) == sum(kept[2])


def test_max_flow_warm_start_reaches_the_same_value():
    for seed in range(25):
        net = random_network(seed)
        nums_b, _ = _as_ints(net.budgets)
        nums_v, _ = _as_ints(net.values)
        caps_s = {i: nums_b[i] for i in range(net.n)}
        caps_t = {j: nums_v[j] for j in range(net.m)}
        adj = {i: net.edges[i] for i in range(net.n)}
        cold = _max_flow_int(caps_s, caps_t, adj)
        # a deliberately bad partial flow: max out the restriction to even goods
        partial_caps = {j: (c if j % 2 == 0 else 0) for j, c in caps_t.items()}
        partial = _max_flow_int(caps_s, partial_caps, adj)
        warm = _max_flow_int(caps_s, caps_t, adj, init=partial)
        assert warm[3] == cold[3]
        # warm start must never lose what the partial flow saturated
        for j, c in partial_caps.items():
            if partial[2][j] == c:
                assert warm[2][j] >= partial[2][j]


# ---------------------------------------------------------------------------
# EqualityFlow mechanics
# ---------------------------------------------------------------------------

NET = EqualityNetwork(
    budgets=(Rat(3, 2), Rat(1)),
    values=(1, 1, 1),
    edges=((0, 1), (1, 2)),
)


def test_from_matrix_as_matrix_round_trip():
    matrix = [[Rat(1), Rat(1, 2), 0], [0, Rat(1, 2), Rat(1, 2)]]
    flow = EqualityFlow.from_matrix(NET, matrix)
    assert flow.as_matrix() == [[Rat(1), Rat(1, 2), Rat(0)], [Rat(0), Rat(1, 2), Rat(1, 2)]]
    assert flow.is_valid()
    assert flow.value() == Rat(5, 2)
    assert flow.flow(0, 1) == Rat(1, 2)
    assert flow.flow(1, 0) == Rat(0)


def test_surplus_accessors():
    flow = EqualityFlow.from_matrix(NET, [[1, 0, 0], [0, 1, 0]])
    assert flow.agent_surplus(0) == Rat(1, 2)
    assert flow.agent_surplus(1) == Rat(0)
    assert flow.agent_surpluses() == (Rat(1, 2), Rat(0))
    assert flow.l1() == Rat(1, 2)
    assert flow.l2sq() == Rat(1, 4)
    assert flow.good_surplus(2) == Rat(1)
    assert flow.sold_goods() == frozenset({0, 1})


def test_is_valid_rejects_defects():
    ok = EqualityFlow.from_matrix(NET, [[1, 0, 0], [0, 1, 0]])
    assert ok.is_valid()
    # support outside the demand edges
    bad_edge = EqualityFlow.from_matrix(NET, [[0, 0, 1], [0, 1, 0]])
    assert not bad_edge.is_valid()
    # overspent budget
    overspent = EqualityFlow.from_matrix(NET, [[1, 1, 0], [0, 0, 1]])
    assert not overspent.is_valid()
    # oversold good
    oversold = EqualityFlow.from_matrix(
        EqualityNetwork(budgets=(2, 2), values=(1, 3, 3), edges=((0, 1), (0, 2))),
        [[2, 0, 0], [2, 0, 0]],
    )
    assert not oversold.is_valid()


def test_is_balanced_rejects_unbalanced_max_flow():
    # both agents can feed good 1; dumping all of it on agent 1 stays maximal
    # but skews the surpluses to (0, 1) instead of (1/2, 1/2)
    net = EqualityNetwork(budgets=(2, 2), values=(1, 2), edges=((0, 1), (1,)))
    skewed = EqualityFlow.from_matrix(net, [[1, 1], [0, 1]])
    assert skewed.is_valid()
    assert skewed.value() == Rat(3)
    bal = balanced_flow(net)
    assert bal.agent_surpluses() == (Rat(1, 2), Rat(1, 2))
    assert is_balanced(net, bal)
    assert not is_balanced(net, skewed)


def test_flow_json_round_trip():
    from admarket import parse_rational

    flow = EqualityFlow.from_matrix(NET, [[1, Rat(1, 2), 0], [0, Rat(1, 2), 0]])
    data = flow.to_json()
    matrix = [[parse_rational(v) for v in row] for row in data["flows"]]
    assert EqualityFlow.from_matrix(NET, matrix).as_matrix() == flow.as_matrix()
    assert data["agent_surpluses"] == ["0", "1/2"]
