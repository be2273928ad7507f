"""Instance model, validation, demand edges, equality networks."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from admarket import (
    AgentLikesNothing,
    EqualityNetwork,
    GoodLikedByNobody,
    GoodUnowned,
    MarketInstance,
    build_equality_network,
    check_irreducible,
    demand_edges,
    interest_digraph,
    validate_instance,
)
from admarket.market import neighborhood, prices_from_json, prices_to_json
from admarket.rationals import Rat

TWO_BY_TWO = MarketInstance(u=((2, 1), (1, 2)), w=((1, 0), (0, 1)))


def test_shape_properties():
    inst = TWO_BY_TWO
    assert (inst.n, inst.m) == (2, 2)
    assert inst.max_utility == 2
    assert inst.max_endowment == 1
    assert inst.supply(0) == 1


def test_json_round_trip():
    inst = TWO_BY_TWO
    again = MarketInstance.from_json(inst.to_json())
    assert again == inst


def test_from_json_rejects_ragged_rows():
    obj = TWO_BY_TWO.to_json()
    obj["u"] = [[2, 1], [1]]
    with pytest.raises(ValueError):
        MarketInstance.from_json(obj)


def test_validation_catches_each_defect():
    with pytest.raises(AgentLikesNothing):
        validate_instance(MarketInstance(u=((0, 0), (1, 1)), w=((1, 0), (0, 1))))
    with pytest.raises(GoodLikedByNobody):
        validate_instance(MarketInstance(u=((1, 0), (1, 0)), w=((1, 0), (0, 1))))
    with pytest.raises(GoodUnowned):
        validate_instance(MarketInstance(u=((1, 1), (1, 1)), w=((1, 0), (1, 0))))


def test_irreducibility_detects_isolated_submarket():
    # agents {0} with good {0} form a closed economy: nothing flows across.
    closed = MarketInstance(u=((1, 0), (0, 1)), w=((1, 0), (0, 1)))
    assert not check_irreducible(closed)
    assert check_irreducible(TWO_BY_TWO)


def test_interest_digraph_edges():
    # adj[i] holds the *other* agents owning goods that i likes
    g = interest_digraph(TWO_BY_TWO)
    assert g[0] == {1}
    assert g[1] == {0}


def test_demand_edges_exact_argmax():
    inst = MarketInstance(u=((3, 1, 2),), w=((1, 1, 1),))
    # at prices (3, 1, 2) all three goods tie at bang-for-buck 1
    assert demand_edges(inst, (3, 1, 2)) == ((0, 1, 2),)
    # at prices (3, 1, 1) good 2 wins strictly
    assert demand_edges(inst, (3, 1, 1)) == ((2,),)


@given(
    st.lists(st.integers(0, 5), min_size=3, max_size=3),
    st.lists(st.fractions(min_value="1/3", max_value=4), min_size=3, max_size=3),
)
def test_demand_edges_maximize_bang_for_buck(us, ps):
    if all(u == 0 for u in us):
        return
    inst = MarketInstance(u=(tuple(us),), w=((1, 1, 1),))
    prices = [Rat(p.numerator, p.denominator) for p in ps]
    (edges,) = demand_edges(inst, prices)
    assert edges, "a liked good always stays demanded"
    best = max(Rat(us[j]) / prices[j] for j in range(3) if us[j] > 0)
    for j in edges:
        assert Rat(us[j]) / prices[j] == best
    for j in range(3):
        if us[j] > 0 and j not in edges:
            assert Rat(us[j]) / prices[j] < best


def test_build_equality_network_budgets_and_values():
    net = build_equality_network(TWO_BY_TWO, (2, 1))
    assert net.budgets == (Rat(2), Rat(1))
    assert net.values == (Rat(2), Rat(1))
    assert net.edges == ((0, 1), (1,))  # agent 0: 2/2 ties 1/1; agent 1: 2/1 wins
    assert net.prices == (Rat(2), Rat(1))


def test_equality_network_validates_endpoints():
    with pytest.raises(ValueError):
        EqualityNetwork(budgets=(1,), values=(1,), edges=((0, 3),))
    with pytest.raises(ValueError):
        EqualityNetwork(budgets=(1, 1), values=(1,), edges=((0,),))


def test_neighborhood():
    net = EqualityNetwork(
        budgets=(1, 1, 1), values=(1, 1, 1), edges=((0, 1), (1,), (2,))
    )
    assert neighborhood(net, [0]) == frozenset({0, 1})
    assert neighborhood(net, [0, 2]) == frozenset({0, 1, 2})
    assert neighborhood(net, []) == frozenset()


def test_prices_json_round_trip():
    ps = (Rat(1), Rat(3, 2), Rat(10**40, 7))
    assert prices_from_json(prices_to_json(ps)) == ps
