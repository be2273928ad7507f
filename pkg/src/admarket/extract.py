"""Exact equilibrium prices from a near-equilibrium network.

Once the iterative phase stops, the terminal equality network already has the
right combinatorics: its demand edges and connected components pin the true
equilibrium down to one price per component scale, and money balance plus one
normalization removes the remaining freedom. This module builds that square
linear system, solves it exactly, and certifies the result independently.

Row families over the m price variables:

* proportionality — for each agent, along a spanning forest of its component,
  equal bang-for-buck ties each demanded good's price to the agent's first
  forest neighbor: u_{i,j1}·p_{jl} − u_{i,jl}·p_{j1} = 0;
* component balance — money entering a component equals money leaving it:
  Σ_k (Σ_{i∈K} w_ik − [k∈K]·supply_k)·p_k = 0, one row per component except
  the one carrying the normalization row;
* normalization — the lexicographically first good of minimum terminal price
  gets price exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import oracle
from .errors import CertificationFailed, RankDeficient
from .market import EqualityNetwork, MarketInstance, build_equality_network
from .rationals import Rat


@dataclass(frozen=True)
class CanonicalSystem:
    """Square m×m exact system A·p = b plus the structure that produced it."""

    matrix: tuple
    rhs: tuple
    components: tuple  # ((agents, goods), ...) in discovery order
    forest: tuple  # ((agent, good), ...) spanning-forest edges
    pinned_good: int
    dropped_component: int


def _components_and_forest(net: EqualityNetwork):
    """BFS decomposition of the bipartite demand graph.

    Components are discovered from the lowest-index unvisited node, agents
    first; every good ends up in some component (goods nobody demands form
    singletons). Forest edges are (agent, good) pairs.
    """
    n, m = net.n, net.m
    good_agents: list[list[int]] = [[] for _ in range(m)]
    for i in range(n):
        for j in net.edges[i]:
            good_agents[j].append(i)
    seen_a = [False] * n
    seen_g = [False] * m
    components = []
    forest = []
    roots = [("a", i) for i in range(n)] + [("g", j) for j in range(m)]
    for kind, root in roots:
        if kind == "a" and seen_a[root]:
            continue
        if kind == "g" and seen_g[root]:
            continue
        agents: list[int] = []
        goods: list[int] = []
        queue = [(kind, root)]
        if kind == "a":
            seen_a[root] = True
        else:
            seen_g[root] = True
        while queue:
            node_kind, node = queue.pop(0)
            if node_kind == "a":
                agents.append(node)
                for j in net.edges[node]:
                    if not seen_g[j]:
                        seen_g[j] = True
                        forest.append((node, j))
                        queue.append(("g", j))
            else:
                goods.append(node)
                for i in good_agents[node]:
                    if not seen_a[i]:
                        seen_a[i] = True
                        forest.append((i, node))
                        queue.append(("a", i))
        components.append((tuple(sorted(agents)), tuple(sorted(goods))))
    return tuple(components), tuple(forest)


def build_canonical_system(
    inst: MarketInstance, net: EqualityNetwork
) -> CanonicalSystem:
    if net.prices is None:
        raise ValueError("network must carry terminal prices")
    m = inst.m
    components, forest = _components_and_forest(net)

    min_price = min(net.prices)
    pinned_good = next(
        j for j in range(m) if net.prices[j] == min_price
    )
    dropped_component = next(
        k for k, (_, goods) in enumerate(components) if pinned_good in goods
    )

    rows: list[list[Rat]] = []
    rhs: list[Rat] = []

    # Proportionality along the forest: each agent's forest-incident goods
    # share one bang-for-buck value, anchored at the agent's first one.
    incident: dict[int, list[int]] = {}
    for agent, good in forest:
        incident.setdefault(agent, []).append(good)
    for agent in sorted(incident):
        goods = incident[agent]
        j1 = goods[0]
        for jl in goods[1:]:
            row = [Rat(0)] * m
            row[jl] += inst.u[agent][j1]
            row[j1] -= inst.u[agent][jl]
            rows.append(row)
            rhs.append(Rat(0))

    for k, (agents, goods) in enumerate(components):
        if k == dropped_component:
            continue
        good_set = set(goods)
        row = [Rat(0)] * m
        for col in range(m):
            coeff = sum(inst.w[i][col] for i in agents)
            if col in good_set:
                coeff -= inst.supply(col)
            row[col] += coeff
        rows.append(row)
        rhs.append(Rat(0))

    row = [Rat(0)] * m
    row[pinned_good] = Rat(1)
    rows.append(row)
    rhs.append(Rat(1))

    if len(rows) != m:
        raise RankDeficient(
            f"canonical system has {len(rows)} rows for {m} goods"
        )
    return CanonicalSystem(
        matrix=tuple(tuple(r) for r in rows),
        rhs=tuple(rhs),
        components=components,
        forest=forest,
        pinned_good=pinned_good,
        dropped_component=dropped_component,
    )


def solve_linear(matrix: Sequence, rhs: Sequence) -> tuple:
    """Exact Gaussian elimination with partial (first-nonzero) pivoting."""
    a = [list(map(Rat, row)) + [Rat(v)] for row, v in zip(matrix, rhs)]
    size = len(a)
    for col in range(size):
        pivot = next((r for r in range(col, size) if a[r][col] != 0), None)
        if pivot is None:
            raise RankDeficient(f"no pivot in column {col}")
        a[col], a[pivot] = a[pivot], a[col]
        inv = a[col][col]
        a[col] = [x / inv for x in a[col]]
        for r in range(size):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return tuple(a[r][size] for r in range(size))


def extract_equilibrium(inst: MarketInstance, prices: Sequence) -> tuple:
    """Snap terminal prices to the exact equilibrium they approximate.

    When the input prices already clear the market exactly (the loop often
    lands on zero surplus) they are returned as-is after certification; the
    canonical linear system is reserved for genuinely approximate inputs.
    That distinction matters: an exact price vector may induce an equality
    structure with several connected components, each scalable on its own,
    and then no full-rank system exists to re-derive what we already hold.

    Raises RankDeficient if the terminal combinatorics underdetermine the
    prices, CertificationFailed if the solved prices are not positive or the
    independent certificate rejects them.
    """
    qs = tuple(Rat(p) for p in prices)
    direct = oracle.check_equilibrium(inst, qs)
    if direct.ok:
        return qs
    net = build_equality_network(inst, qs)
    system = build_canonical_system(inst, net)
    exact = solve_linear(system.matrix, system.rhs)
    for j, p in enumerate(exact):
        if p <= 0:
            raise CertificationFailed(
                f"extracted price of good {j} is nonpositive"
            )
    report = oracle.check_equilibrium(inst, exact)
    if not report.ok:
        raise CertificationFailed(
            "extracted prices fail the equilibrium certificate", report=report
        )
    return exact
