"""Exact maximum flow and balanced flow on equality networks.

A balanced flow is a maximum s-t flow whose agent-surplus vector (budget minus
money spent, per agent) has minimum Euclidean norm among all maximum flows.
Its certificate is checkable locally:

  (BF1) the flow is maximum (no augmenting path), and
  (BF2) the residual graph restricted to agents and goods (forward demand
        edges, backward edges where flow is positive) has no path from a
        higher-surplus agent to a lower-surplus one.

Computation peels surplus levels. For the agents still active, the top level
value is  λ* = max over nonempty subsets A of  h(A) = (Σ_A b_i − value(Γ(A)))/|A|,
found by Dinkelbach-style iteration: guess λ, test feasibility of routing the
excesses (b_i − λ)^+ through the goods, and on failure replace λ by h(A) of the
maximal violating set (read off the min cut). Every iterate is an h-value and
h ≤ λ* throughout, so the first feasible λ *is* λ*. The maximal tight set T at
λ* — the agents that cannot reach t in the residual graph, including zero-cap
"riders" whose whole budget is stuck — then receives surplus min(b_i, λ*), its
goods Γ(T) are fully consumed, the level's flow is frozen, and the procedure
recurses on the rest. The final λ* = 0 level clears all remaining budgets.

All arithmetic is on integers over shared denominators: budgets and values
arrive over a common D, and every level threshold divides (money)/|A| for some
|A| ≤ n, so flows live exactly over D·lcm(1..n). No rational canonicalization
happens inside the kernels.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Iterable, Optional, Sequence

from .errors import InvariantViolation
from .market import EqualityNetwork
from .rationals import Rat, common_denominator, factorial_lcm, format_rational, gcd_int

_DINKELBACH_SLACK = 10  # allowed rounds: 3n + slack (theory gives O(n))


# ---------------------------------------------------------------------------
# integer kernels
# ---------------------------------------------------------------------------


def _max_flow_int(
    caps_s: dict[int, int],
    caps_t: dict[int, int],
    adj: dict[int, Sequence[int]],
    init=None,
):
    """Edmonds-Karp specialized to the tripartite s/agents/goods/t shape.

    caps_s: agent -> source-edge capacity; caps_t: good -> sink-edge capacity;
    adj: agent -> iterable of goods (uncapacitated demand edges). Returns
    (fs, fe, ft, value) with fe[agent] a dict good -> flow. Deterministic:
    BFS scans agents and goods in ascending index order.

    init: optional feasible (fs, fe, ft, value) to warm-start from; the input
    is copied, and augmentation proceeds on its residual graph. Sink-edge
    flows never decrease during augmentation, so anything the initial flow
    saturates at the sink stays saturated.
    """
    agents = sorted(caps_s)
    goods_of = {i: sorted(adj.get(i, ())) for i in agents}
    agents_of: dict[int, list[int]] = {j: [] for j in caps_t}
    for i in agents:
        for j in goods_of[i]:
            agents_of[j].append(i)
    if init is None:
        fs = {i: 0 for i in agents}
        ft = {j: 0 for j in caps_t}
        fe = {i: {} for i in agents}
        value = 0
    else:
        ifs, ife, ift, value = init
        fs = {i: ifs.get(i, 0) for i in agents}
        ft = {j: ift.get(j, 0) for j in caps_t}
        fe = {i: dict(ife.get(i, {})) for i in agents}

    S, T = "s", "t"
    while True:
        # BFS for a shortest augmenting path in the residual graph.
        parent: dict = {}
        queue = deque()
        for i in agents:
            if fs[i] < caps_s[i]:
                parent[("a", i)] = S
                queue.append(("a", i))
        found = False
        while queue and not found:
            kind, v = queue.popleft()
            if kind == "a":
                for j in goods_of[v]:
                    node = ("g", j)
                    if node not in parent:
                        parent[node] = ("a", v)
                        queue.append(node)
            else:
                if ft[v] < caps_t[v]:
                    parent[T] = ("g", v)
                    found = True
                    break
                for i in agents_of[v]:
                    node = ("a", i)
                    if node not in parent and fe[i].get(v, 0) > 0:
                        parent[node] = ("g", v)
                        queue.append(node)
        if not found:
            return fs, fe, ft, value

        # Bottleneck, then augment.
        path = []
        node = parent[T]
        while node != S:
            path.append(node)
            node = parent[node]
        path.reverse()  # a, g, a, g, ..., g
        bottleneck: Optional[int] = None

        def tighter(cap):
            nonlocal bottleneck
            if bottleneck is None or cap < bottleneck:
                bottleneck = cap

        first_agent = path[0][1]
        tighter(caps_s[first_agent] - fs[first_agent])
        for prev, cur in zip(path, path[1:]):
            if prev[0] == "g" and cur[0] == "a":  # backward over flow
                tighter(fe[cur[1]][prev[1]])
        last_good = path[-1][1]
        tighter(caps_t[last_good] - ft[last_good])

        fs[first_agent] += bottleneck
        ft[last_good] += bottleneck
        value += bottleneck
        for prev, cur in zip(path, path[1:]):
            if prev[0] == "a" and cur[0] == "g":
                fe[prev[1]][cur[1]] = fe[prev[1]].get(cur[1], 0) + bottleneck
            elif prev[0] == "g" and cur[0] == "a":
                fe[cur[1]][prev[1]] -= bottleneck


def _unreachable_to_sink(caps_s, caps_t, adj, fs, fe, ft) -> set[int]:
    """Agents with no residual path to t (the maximal min-cut source side)."""
    rev: dict = {}  # reverse-residual adjacency built on the fly via BFS from t
    seen_a: set[int] = set()
    seen_g: set[int] = {j for j in caps_t if ft[j] < caps_t[j]}
    queue = deque(("g", j) for j in sorted(seen_g))
    agents_with = {i: set(adj.get(i, ())) for i in caps_s}
    while queue:
        kind, v = queue.popleft()
        if kind == "g":
            # residual into g: forward demand edges from any agent with v in adj
            for i in caps_s:
                if i not in seen_a and v in agents_with[i]:
                    seen_a.add(i)
                    queue.append(("a", i))
        else:
            # residual into agent v: backward over positive flow on (v, j)
            for j, f in fe[v].items():
                if f > 0 and j not in seen_g:
                    seen_g.add(j)
                    queue.append(("g", j))
    return set(caps_s) - seen_a


def _certify_balanced_int(B, V, adj, fs, fe, ft) -> bool:
    """BF1 + BF2 on integer state (everything over one shared denominator)."""
    n, m = len(B), len(V)
    fe_map = [dict(row.items() if isinstance(row, dict) else row) for row in fe]

    # BF1: no residual s->t path.
    seen_a = {i for i in range(n) if fs[i] < B[i]}
    seen_g: set[int] = set()
    queue = deque(seen_a)
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if ft[j] < V[j]:
                return False
            if j not in seen_g:
                seen_g.add(j)
                for k in range(n):
                    if k not in seen_a and fe_map[k].get(j, 0) > 0:
                        seen_a.add(k)
                        queue.append(k)

    # BF2: no residual path from a higher-surplus agent to a lower-surplus one.
    surplus = [B[i] - fs[i] for i in range(n)]
    buyers: list[list[int]] = [[] for _ in range(m)]
    for i in range(n):
        for j, f in fe_map[i].items():
            if f > 0:
                buyers[j].append(i)
    for start in range(n):
        reach_a = {start}
        reach_g: set[int] = set()
        stack = [start]
        r0 = surplus[start]
        while stack:
            i = stack.pop()
            for j in adj[i]:
                if j not in reach_g:
                    reach_g.add(j)
                    for k in buyers[j]:
                        if k not in reach_a:
                            reach_a.add(k)
                            if surplus[k] < r0:
                                return False
                            stack.append(k)
    return True


def balanced_flow_int(
    B: Sequence[int],
    V: Sequence[int],
    adj: Sequence[Sequence[int]],
    K: Optional[int] = None,
    seeds: Optional[Sequence[Sequence[int]]] = None,
    keep_sold: Optional[Iterable[int]] = None,
):
    """Balanced flow with budgets B and values V given as integers over any
    common denominator; flows are returned as integers over K times that
    denominator (K defaults to lcm(1..n)). Returns (fs, fe, ft, K, peel)
    where peel lists the tight agent sets from the top level down.

    seeds: optional agent sets to include among the initial threshold guesses.
    Any nonempty subset of the active agents yields a valid h-value (h never
    exceeds the level threshold), so stale sets are harmless; passing the
    previous peel from an almost-identical network usually starts the search
    at the exact threshold and saves the first infeasible max-flow round.

    keep_sold: goods whose sink edges should stay saturated if possible. The
    agent-side totals of a balanced flow are unique, but how the money spreads
    over goods is not; when a listed good comes out unsaturated we redistribute
    the good side at fixed agent totals, filling the listed goods first. The
    result is still balanced (same surplus vector), just a canonical choice.
    """
    n, m = len(B), len(V)
    if K is None:
        K = factorial_lcm(n)
    BK = [b * K for b in B]
    VK = [v * K for v in V]
    fs = [0] * n
    ft = [0] * m
    fe: list[dict[int, int]] = [{} for _ in range(n)]
    peel: list[tuple[int, ...]] = []

    active_a = set(range(n))
    active_g = set(range(m))
    while active_a:
        radj = {i: tuple(j for j in adj[i] if j in active_g) for i in active_a}
        caps_t = {j: VK[j] for j in active_g}

        def h_num(A: Sequence[int]) -> int:
            goods = set()
            for i in A:
                goods.update(radj[i])
            money = sum(B[i] for i in A) - sum(V[j] for j in goods)
            return money * (K // len(A))

        lam = max(0, h_num(list(active_a)), max(h_num([i]) for i in active_a))
        for seed in seeds or ():
            live = [i for i in seed if i in active_a]
            if live:
                cand = h_num(live)
                if cand > lam:
                    lam = cand
        rounds = 0
        while True:
            rounds += 1
            if rounds > 3 * n + _DINKELBACH_SLACK:
                raise InvariantViolation("level threshold search failed to settle")
            caps_s = {i: max(BK[i] - lam, 0) for i in active_a}
            lfs, lfe, lft, value = _max_flow_int(caps_s, caps_t, radj)
            if sum(caps_s.values()) == value:
                break
            tight = _unreachable_to_sink(caps_s, caps_t, radj, lfs, lfe, lft)
            core = [i for i in tight if BK[i] > lam]
            new_lam = h_num(core)
            if new_lam <= lam:
                raise InvariantViolation("level threshold failed to increase")
            lam = new_lam

        if lam == 0:
            # Everyone still active clears completely; freeze and stop.
            peel.append(tuple(sorted(active_a)))
            for i in active_a:
                fs[i] = lfs[i]
                fe[i] = {j: f for j, f in lfe[i].items() if f > 0}
            for j in active_g:
                ft[j] = lft[j]
            break

        tight = _unreachable_to_sink(caps_s, caps_t, radj, lfs, lfe, lft)
        peel.append(tuple(sorted(tight)))
        gamma = set()
        for i in tight:
            gamma.update(radj[i])
        for i in tight:
            fs[i] = lfs[i]
            fe[i] = {j: f for j, f in lfe[i].items() if f > 0}
        for j in gamma:
            ft[j] = lft[j]
            if lft[j] != VK[j]:
                raise InvariantViolation("tight level left a demanded good unsold")
        active_a -= tight
        active_g -= gamma
    if keep_sold is not None and any(
        j < m and ft[j] < VK[j] for j in keep_sold
    ):
        fadj = {i: adj[i] for i in range(n)}
        caps_s = {i: fs[i] for i in range(n)}
        kept = {j for j in keep_sold if j < m}
        first = _max_flow_int(
            caps_s, {j: (VK[j] if j in kept else 0) for j in range(m)}, fadj
        )
        rfs, rfe, rft, rvalue = _max_flow_int(
            caps_s, {j: VK[j] for j in range(m)}, fadj, init=first
        )
        if rvalue != sum(fs):
            raise InvariantViolation("sold-preserving redistribution lost flow")
        fe = [{j: f for j, f in rfe[i].items() if f > 0} for i in range(n)]
        ft = [rft[j] for j in range(m)]
    if not _certify_balanced_int([b * K for b in B], [v * K for v in V], adj, fs, fe, ft):
        raise InvariantViolation("balanced flow failed its own certificate")
    return fs, fe, ft, K, peel


# ---------------------------------------------------------------------------
# rational-level API
# ---------------------------------------------------------------------------


class EqualityFlow:
    """A flow on an EqualityNetwork, stored as integers over one denominator."""

    def __init__(self, net: EqualityNetwork, den: int, fs, ft, fe):
        self.net = net
        self.den = int(den)
        self.fs = tuple(int(x) for x in fs)
        self.ft = tuple(int(x) for x in ft)
        self.fe = tuple(
            tuple(
                sorted(
                    (int(j), int(f))
                    for j, f in (row.items() if isinstance(row, dict) else row)
                )
            )
            for row in fe
        )
        self._surpluses: Optional[tuple] = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_matrix(cls, net: EqualityNetwork, matrix) -> "EqualityFlow":
        """Build from a dense n×m rational matrix (hand examples, JSON input)."""
        rows = [[Rat(x) for x in row] for row in matrix]
        flat = [x for row in rows for x in row]
        nums, den = common_denominator(flat) if flat else ([], 1)
        it = iter(nums)
        ints = [[next(it) for _ in row] for row in rows]
        fs = [sum(row) for row in ints]
        ft = [sum(ints[i][j] for i in range(net.n)) for j in range(net.m)]
        fe = [
            {j: ints[i][j] for j in range(net.m) if ints[i][j] != 0}
            for i in range(net.n)
        ]
        return cls(net, den, fs, ft, fe)

    def _normalized(self) -> "EqualityFlow":
        g = self.den
        for x in self.fs + self.ft:
            g = gcd_int(g, x)
        for row in self.fe:
            for _, f in row:
                g = gcd_int(g, f)
        if g <= 1:
            return self
        return EqualityFlow(
            self.net,
            self.den // g,
            [x // g for x in self.fs],
            [x // g for x in self.ft],
            [[(j, f // g) for j, f in row] for row in self.fe],
        )

    # -- accessors -----------------------------------------------------------

    def flow(self, i: int, j: int) -> Rat:
        for jj, f in self.fe[i]:
            if jj == j:
                return Rat(f, self.den)
        return Rat(0)

    def value(self) -> Rat:
        return Rat(sum(self.fs), self.den)

    def as_matrix(self) -> list:
        """Dense n×m rational matrix view (JSON output, lifting, tests)."""
        out = [[Rat(0)] * self.net.m for _ in range(self.net.n)]
        for i, row in enumerate(self.fe):
            for j, f in row:
                out[i][j] = Rat(f, self.den)
        return out

    def agent_surplus(self, i: int) -> Rat:
        return self.net.budgets[i] - Rat(self.fs[i], self.den)

    def good_surplus(self, j: int) -> Rat:
        return self.net.values[j] - Rat(self.ft[j], self.den)

    def agent_surpluses(self) -> tuple:
        if self._surpluses is None:
            self._surpluses = tuple(
                self.agent_surplus(i) for i in range(self.net.n)
            )
        return self._surpluses

    def l1(self) -> Rat:
        return sum(self.agent_surpluses(), Rat(0))

    def l2sq(self) -> Rat:
        return sum((r * r for r in self.agent_surpluses()), Rat(0))

    def sold_goods(self) -> frozenset[int]:
        return frozenset(
            j for j in range(self.net.m) if self.good_surplus(j) == 0
        )

    def is_valid(self) -> bool:
        """Conservation, capacities, and support ⊆ demand edges, all exact."""
        net = self.net
        for i in range(net.n):
            total = 0
            for j, f in self.fe[i]:
                if f < 0 or j not in net.edges[i]:
                    return False
                total += f
            if total != self.fs[i]:
                return False
            if not 0 <= Rat(self.fs[i], self.den) <= net.budgets[i]:
                return False
        for j in range(net.m):
            inflow = sum(f for i in range(net.n) for jj, f in self.fe[i] if jj == j)
            if inflow != self.ft[j]:
                return False
            if not 0 <= Rat(self.ft[j], self.den) <= net.values[j]:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "flows": [
                [format_rational(self.flow(i, j)) for j in range(self.net.m)]
                for i in range(self.net.n)
            ],
            "agent_surpluses": [
                format_rational(r) for r in self.agent_surpluses()
            ],
        }

    def __repr__(self):
        surps = ", ".join(format_rational(r) for r in self.agent_surpluses())
        return f"<EqualityFlow value={format_rational(self.value())} surpluses=[{surps}]>"


def _net_to_ints(net: EqualityNetwork):
    nums, den = common_denominator(list(net.budgets) + list(net.values))
    return nums[: net.n], nums[net.n :], den


def max_flow(net: EqualityNetwork) -> EqualityFlow:
    """Some maximum flow on N_p (deterministic, but not balanced)."""
    B, V, den = _net_to_ints(net)
    caps_s = {i: B[i] for i in range(net.n)}
    caps_t = {j: V[j] for j in range(net.m)}
    adj = {i: net.edges[i] for i in range(net.n)}
    fs, fe, ft, _ = _max_flow_int(caps_s, caps_t, adj)
    return EqualityFlow(
        net,
        den,
        [fs[i] for i in range(net.n)],
        [ft[j] for j in range(net.m)],
        [fe[i] for i in range(net.n)],
    )._normalized()


def balanced_flow(net: EqualityNetwork) -> EqualityFlow:
    """The balanced flow on N_p; BF1/BF2 are asserted inside the kernel."""
    B, V, den = _net_to_ints(net)
    fs, fe, ft, K, _ = balanced_flow_int(B, V, net.edges)
    return EqualityFlow(net, den * K, fs, ft, fe)._normalized()


def is_balanced(net: EqualityNetwork, flow: EqualityFlow) -> bool:
    """Exact check of BF1 (maximality) and BF2 (no high-to-low residual path)."""
    if flow.net is not net and (
        flow.net.budgets != net.budgets
        or flow.net.values != net.values
        or flow.net.edges != net.edges
    ):
        raise ValueError("flow belongs to a different network")
    if not flow.is_valid():
        raise ValueError("not a valid flow on this network")

    import math

    B_num, den_net = common_denominator(list(net.budgets) + list(net.values))
    V_num = B_num[net.n :]
    B_num = B_num[: net.n]
    den = math.lcm(den_net, flow.den)
    scale_net, scale_f = den // den_net, den // flow.den
    return _certify_balanced_int(
        [b * scale_net for b in B_num],
        [v * scale_net for v in V_num],
        net.edges,
        [x * scale_f for x in flow.fs],
        [{j: f * scale_f for j, f in row} for row in flow.fe],
        [x * scale_f for x in flow.ft],
    )
