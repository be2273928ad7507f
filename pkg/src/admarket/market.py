"""Market instances, validation, and equality networks.

A linear Arrow-Debreu exchange market has n agents and m divisible goods.
Agent i holds an endowment w[i][j] >= 0 of each good and values consumption
linearly with integer utilities u[i][j]. At prices p an agent only wants goods
maximizing bang-for-buck u[i][j]/p[j]; the equality network N_p wires source ->
agent edges with budget capacity, good -> sink edges with value capacity, and
uncapacitated agent -> good edges exactly on those maximizing pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import (
    AgentLikesNothing,
    GoodLikedByNobody,
    GoodUnowned,
    MarketValidationError,
)
from .rationals import Rat, format_rational, parse_rational


@dataclass(frozen=True)
class MarketInstance:
    """Immutable utility/endowment matrices with non-negative integer entries."""

    u: tuple[tuple[int, ...], ...]
    w: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        u = tuple(tuple(int(x) for x in row) for row in self.u)
        w = tuple(tuple(int(x) for x in row) for row in self.w)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)
        if len(u) != len(w):
            raise MarketValidationError("u and w disagree on the number of agents")
        if len(u) == 0:
            raise MarketValidationError("need at least one agent")
        m = len(u[0])
        if m == 0:
            raise MarketValidationError("need at least one good")
        for row in u + w:
            if len(row) != m:
                raise MarketValidationError("ragged matrix")
            if any(x < 0 for x in row):
                raise MarketValidationError("negative matrix entry")

    @property
    def n(self) -> int:
        return len(self.u)

    @property
    def m(self) -> int:
        return len(self.u[0])

    @property
    def max_utility(self) -> int:
        return max(max(row) for row in self.u)

    @property
    def max_endowment(self) -> int:
        return max(max(row) for row in self.w)

    def supply(self, j: int) -> int:
        """Total endowment of good j across agents."""
        return sum(self.w[i][j] for i in range(self.n))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "u": [list(row) for row in self.u],
            "w": [list(row) for row in self.w],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MarketInstance":
        inst = cls(u=tuple(map(tuple, obj["u"])), w=tuple(map(tuple, obj["w"])))
        if "n" in obj and int(obj["n"]) != inst.n:
            raise MarketValidationError("declared n disagrees with matrix shape")
        if "m" in obj and int(obj["m"]) != inst.m:
            raise MarketValidationError("declared m disagrees with matrix shape")
        return inst


def validate_instance(inst: MarketInstance) -> None:
    """Raise unless every agent likes a good, and every good is liked and owned.

    These three conditions (plus irreducibility, checked separately) are the
    model assumptions under which equilibria exist with all-positive prices.
    """
    for i in range(inst.n):
        if not any(inst.u[i][j] > 0 for j in range(inst.m)):
            raise AgentLikesNothing(i)
    for j in range(inst.m):
        if not any(inst.u[i][j] > 0 for i in range(inst.n)):
            raise GoodLikedByNobody(j)
        if inst.supply(j) == 0:
            raise GoodUnowned(j)


def interest_digraph(inst: MarketInstance) -> list[set[int]]:
    """adj[i] = {k != i : agent i likes some good that agent k owns}."""
    owners = [
        {k for k in range(inst.n) if inst.w[k][j] > 0} for j in range(inst.m)
    ]
    adj: list[set[int]] = [set() for _ in range(inst.n)]
    for i in range(inst.n):
        for j in range(inst.m):
            if inst.u[i][j] > 0:
                adj[i] |= owners[j]
        adj[i].discard(i)
    return adj


def check_irreducible(inst: MarketInstance) -> bool:
    """True iff no proper agent subset likes only goods it owns in full.

    Equivalent to strong connectivity of the interest/ownership digraph: a
    subset with no outgoing edge exists exactly when some reachability closure
    is proper, so it suffices to check forward and backward reachability from
    agent 0.
    """
    if inst.n == 1:
        return True
    adj = interest_digraph(inst)
    radj: list[set[int]] = [set() for _ in range(inst.n)]
    for i, outs in enumerate(adj):
        for k in outs:
            radj[k].add(i)

    def full_reach(graph) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            for k in graph[stack.pop()]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
        return len(seen) == inst.n

    return full_reach(adj) and full_reach(radj)


@dataclass(frozen=True)
class EqualityNetwork:
    """The flow network N_p (budgets, values, demand edges) at some prices.

    `edges[i]` lists agent i's demand edges as a sorted tuple of good indices.
    Networks can be built from an instance at prices, or assembled directly
    for flow-level tests; `prices` is carried when known.
    """

    budgets: tuple
    values: tuple
    edges: tuple[tuple[int, ...], ...]
    prices: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(Rat(b) for b in self.budgets))
        object.__setattr__(self, "values", tuple(Rat(v) for v in self.values))
        object.__setattr__(
            self, "edges", tuple(tuple(sorted(e)) for e in self.edges)
        )
        if self.prices is not None:
            object.__setattr__(self, "prices", tuple(Rat(p) for p in self.prices))
        if len(self.budgets) != len(self.edges):
            raise ValueError("edges and budgets disagree on the agent count")
        for e in self.edges:
            for j in e:
                if not 0 <= j < len(self.values):
                    raise ValueError(f"edge endpoint {j} out of range")

    @property
    def n(self) -> int:
        return len(self.budgets)

    @property
    def m(self) -> int:
        return len(self.values)

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i in range(self.n) for j in self.edges[i])

    def total_budget(self) -> Rat:
        return sum(self.budgets, Rat(0))

    def total_value(self) -> Rat:
        return sum(self.values, Rat(0))


def demand_edges(inst: MarketInstance, prices: Sequence) -> tuple[tuple[int, ...], ...]:
    """Per-agent bang-for-buck argmax sets, compared by cross-multiplication.

    u[i][j]/p_j >= u[i][k]/p_k  <=>  u[i][j] * p_k >= u[i][k] * p_j, so no
    divisions (and no denominator blowup) are ever performed.
    """
    prices = [Rat(p) for p in prices]
    if any(p <= 0 for p in prices):
        raise ValueError("prices must be positive")
    out = []
    for i in range(inst.n):
        best: list[int] = []
        for j in range(inst.m):
            if inst.u[i][j] == 0:
                continue
            if not best:
                best = [j]
                continue
            b = best[0]
            lhs = inst.u[i][j] * prices[b]
            rhs = inst.u[i][b] * prices[j]
            if lhs > rhs:
                best = [j]
            elif lhs == rhs:
                best.append(j)
        out.append(tuple(best))
    return tuple(out)


def build_equality_network(inst: MarketInstance, prices: Sequence) -> EqualityNetwork:
    """N_p: budgets Σ_j w_ij p_j, values p_j · supply_j, edges on bang argmax."""
    prices = tuple(Rat(p) for p in prices)
    if len(prices) != inst.m:
        raise ValueError("price vector length != m")
    budgets = tuple(
        sum((inst.w[i][j] * prices[j] for j in range(inst.m)), Rat(0))
        for i in range(inst.n)
    )
    values = tuple(prices[j] * inst.supply(j) for j in range(inst.m))
    return EqualityNetwork(
        budgets=budgets, values=values, edges=demand_edges(inst, prices), prices=prices
    )


def neighborhood(net: EqualityNetwork, agents: Iterable[int]) -> frozenset[int]:
    """Γ(agents): every good one demand edge away from the given agents."""
    out: set[int] = set()
    for i in agents:
        out.update(net.edges[i])
    return frozenset(out)


def prices_to_json(prices) -> list[str]:
    return [format_rational(p) for p in prices]


def prices_from_json(items) -> tuple:
    return tuple(parse_rational(str(s)) for s in items)
