"""Independent ground truth: certificates and brute-force equilibria.

Nothing here shares logic with the iterative solver. check_equilibrium tests
the three equilibrium conditions directly (or, without a flow, via one
max-flow saturation check); oracle_equilibrium finds an equilibrium for tiny
instances by enumerating demand supports and solving an exact linear
feasibility problem per support with a Phase-1 simplex over rationals;
balanced_surpluses_reference peels surplus levels by subset enumeration
without ever computing a flow.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import NoEquilibriumFound
from .flow import EqualityFlow, max_flow
from .market import (
    EqualityNetwork,
    MarketInstance,
    build_equality_network,
    validate_instance,
)
from .rationals import Rat, format_rational

_SUPPORT_BUDGET = 500_000  # combinations; tiny instances stay far below


@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple
    deficit: Rat
    message: str

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "index": list(self.index),
            "deficit": format_rational(self.deficit),
            "message": self.message,
        }


@dataclass(frozen=True)
class CertificateReport:
    ok: bool
    violations: tuple[Violation, ...]

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


def _as_matrix(inst: MarketInstance, flows) -> list[list[Rat]]:
    if isinstance(flows, EqualityFlow):
        return [
            [flows.flow(i, j) for j in range(inst.m)] for i in range(inst.n)
        ]
    return [[Rat(x) for x in row] for row in flows]


def check_equilibrium(
    inst: MarketInstance, prices: Sequence, flows=None
) -> CertificateReport:
    """Exact certificate: goods sold out, budgets spent, purchases optimal.

    With explicit flows the three conditions are checked by substitution.
    Without flows, a single max flow on N_p decides existence: the min cut
    must equal the full money supply Σ_ij w_ij·p_j on both sides.
    """
    prices = [Rat(p) for p in prices]
    violations: list[Violation] = []
    for j, p in enumerate(prices):
        if p <= 0:
            violations.append(
                Violation("nonpositive-price", (j,), Rat(0) - p,
                          f"price of good {j} is {format_rational(p)}")
            )
    if violations:
        return CertificateReport(False, tuple(violations))

    if flows is None:
        net = build_equality_network(inst, prices)
        f = max_flow(net)
        for j in range(inst.m):
            gap = f.good_surplus(j)
            if gap != 0:
                violations.append(
                    Violation("good-unsold", (j,), gap,
                              f"good {j} retains unsold value {format_rational(gap)}")
                )
        for i in range(inst.n):
            gap = f.agent_surplus(i)
            if gap != 0:
                violations.append(
                    Violation("agent-underspent", (i,), gap,
                              f"agent {i} retains budget {format_rational(gap)}")
                )
        return CertificateReport(not violations, tuple(violations))

    f = _as_matrix(inst, flows)
    for i in range(inst.n):
        for j in range(inst.m):
            if f[i][j] < 0:
                violations.append(
                    Violation("flow-invalid", (i, j), -f[i][j],
                              f"negative flow on ({i},{j})")
                )
    for j in range(inst.m):
        sold = sum((f[i][j] for i in range(inst.n)), Rat(0))
        want = inst.supply(j) * prices[j]
        if sold != want:
            violations.append(
                Violation("good-unsold", (j,), want - sold,
                          f"good {j}: sold {format_rational(sold)} of "
                          f"{format_rational(want)}")
            )
    for i in range(inst.n):
        spent = sum((f[i][j] for j in range(inst.m)), Rat(0))
        budget = sum(
            (inst.w[i][j] * prices[j] for j in range(inst.m)), Rat(0)
        )
        if spent != budget:
            violations.append(
                Violation("agent-underspent", (i,), budget - spent,
                          f"agent {i}: spent {format_rational(spent)} of "
                          f"{format_rational(budget)}")
            )
    for i in range(inst.n):
        for j in range(inst.m):
            if f[i][j] > 0:
                for k in range(inst.m):
                    # u_ij/p_j must top u_ik/p_k, cross-multiplied.
                    if inst.u[i][j] * prices[k] < inst.u[i][k] * prices[j]:
                        violations.append(
                            Violation(
                                "non-optimal-purchase", (i, j, k), Rat(0),
                                f"agent {i} buys good {j} but good {k} has "
                                "strictly better bang-for-buck",
                            )
                        )
                        break
    return CertificateReport(not violations, tuple(violations))


# ---------------------------------------------------------------------------
# exact LP feasibility (Phase-1 simplex, Bland's rule)
# ---------------------------------------------------------------------------


def _lp_feasible(
    n_vars: int,
    equalities: list[tuple[dict[int, Rat], Rat]],
    inequalities: list[tuple[dict[int, Rat], Rat]],
) -> Optional[list[Rat]]:
    """Find x >= 0 with A_eq·x = b_eq and A_ineq·x >= b_ineq, or None.

    Phase-1 simplex over exact rationals: surplus variables turn inequalities
    into equalities, rows are sign-normalized, one artificial variable per row
    is driven to zero. Bland's anti-cycling rule keeps it finite.
    """
    rows: list[list[Rat]] = []
    rhs: list[Rat] = []
    n_slack = len(inequalities)
    total = n_vars + n_slack  # artificials appended later
    for coeffs, b in equalities:
        row = [Rat(0)] * total
        for idx, c in coeffs.items():
            row[idx] = Rat(c)
        rows.append(row)
        rhs.append(Rat(b))
    for s, (coeffs, b) in enumerate(inequalities):
        row = [Rat(0)] * total
        for idx, c in coeffs.items():
            row[idx] = Rat(c)
        row[n_vars + s] = Rat(-1)
        rows.append(row)
        rhs.append(Rat(b))

    m_rows = len(rows)
    for r in range(m_rows):
        if rhs[r] < 0:
            rows[r] = [-c for c in rows[r]]
            rhs[r] = -rhs[r]
    # artificial columns
    for r in range(m_rows):
        rows[r] = rows[r] + [Rat(1) if k == r else Rat(0) for k in range(m_rows)]
    basis = [total + r for r in range(m_rows)]
    ncols = total + m_rows

    # Phase-1 objective: minimize sum of artificials. Maintain reduced costs
    # implicitly: cost row = sum of rows with artificial basis vars.
    cost = [Rat(0)] * ncols
    z = Rat(0)
    for r in range(m_rows):
        for c in range(ncols):
            cost[c] += rows[r][c]
        z += rhs[r]
    for r in range(m_rows):
        cost[basis[r]] = Rat(0)

    while True:
        enter = next(
            (c for c in range(total) if cost[c] > 0), None
        )
        if enter is None:
            break
        pivot_row = None
        best = None
        for r in range(m_rows):
            a = rows[r][enter]
            if a > 0:
                ratio = rhs[r] / a
                if (
                    best is None
                    or ratio < best
                    or (ratio == best and basis[r] < basis[pivot_row])
                ):
                    best = ratio
                    pivot_row = r
        if pivot_row is None:
            # Unbounded phase-1 objective cannot happen (bounded below by 0);
            # defensive guard.
            return None
        piv = rows[pivot_row][enter]
        rows[pivot_row] = [c / piv for c in rows[pivot_row]]
        rhs[pivot_row] /= piv
        for r in range(m_rows):
            if r != pivot_row and rows[r][enter] != 0:
                factor = rows[r][enter]
                rows[r] = [
                    a - factor * b for a, b in zip(rows[r], rows[pivot_row])
                ]
                rhs[r] -= factor * rhs[pivot_row]
        if cost[enter] != 0:
            factor = cost[enter]
            cost = [a - factor * b for a, b in zip(cost, rows[pivot_row])]
            z -= factor * rhs[pivot_row]
        basis[pivot_row] = enter

    if z != 0:
        return None
    x = [Rat(0)] * n_vars
    for r, b in enumerate(basis):
        if b < n_vars:
            x[b] = rhs[r]
        elif b >= total and rhs[r] != 0:
            return None  # artificial stuck basic at nonzero level
    return x


_BLAND_NOTE = _lp_feasible.__doc__  # kept for introspection/tests


def oracle_equilibrium(inst: MarketInstance):
    """Equilibrium (prices, flows) by demand-support enumeration.

    For each candidate support (one nonempty set of liked goods per agent),
    the equilibrium conditions become linear: equal bang-for-buck inside the
    support, no better bang outside, goods clear, budgets clear. Prices are
    substituted p_j = 1 + y_j with y_j >= 0 (a scale-invariance argument puts
    some representative of any equilibrium ray in that box, and it excludes
    degenerate zero-price solutions). The first feasible support in
    enumeration order wins; prices are normalized to p_1 = 1 afterwards.
    """
    validate_instance(inst)
    n, m = inst.n, inst.m
    cells = [
        tuple(j for j in range(m) if inst.u[i][j] > 0) for i in range(n)
    ]
    combos = 1
    for c in cells:
        combos *= (1 << len(c)) - 1
        if combos > _SUPPORT_BUDGET:
            raise ValueError(
                "instance too large for support enumeration "
                f"(> {_SUPPORT_BUDGET} supports)"
            )

    def subsets(goods):
        for size in range(1, len(goods) + 1):
            yield from itertools.combinations(goods, size)

    for support in itertools.product(*(subsets(c) for c in cells)):
        fvars = [(i, j) for i in range(n) for j in support[i]]
        findex = {cell: m + k for k, cell in enumerate(fvars)}
        nv = m + len(fvars)
        eqs: list[tuple[dict[int, Rat], Rat]] = []
        ineqs: list[tuple[dict[int, Rat], Rat]] = []

        for i in range(n):
            j1 = support[i][0]
            u1 = inst.u[i][j1]
            for jl in support[i][1:]:
                ul = inst.u[i][jl]
                # u1·(1+y_jl) = ul·(1+y_j1)
                eqs.append(({jl: Rat(u1), j1: Rat(-ul)}, Rat(ul - u1)))
            for k in range(m):
                if k in support[i] or inst.u[i][k] == 0:
                    continue
                uk = inst.u[i][k]
                # u1·(1+y_k) >= uk·(1+y_j1)
                ineqs.append(({k: Rat(u1), j1: Rat(-uk)}, Rat(uk - u1)))
        for j in range(m):
            coeffs: dict[int, Rat] = {j: Rat(-inst.supply(j))}
            for i in range(n):
                if j in support[i]:
                    coeffs[findex[(i, j)]] = Rat(1)
            eqs.append((coeffs, Rat(inst.supply(j))))
        for i in range(n):
            coeffs = {}
            for j in range(m):
                if inst.w[i][j]:
                    coeffs[j] = Rat(-inst.w[i][j])
            for j in support[i]:
                coeffs[findex[(i, j)]] = coeffs.get(findex[(i, j)], Rat(0)) + 1
            eqs.append((coeffs, Rat(sum(inst.w[i]))))

        x = _lp_feasible(nv, eqs, ineqs)
        if x is None:
            continue
        prices = [1 + x[j] for j in range(m)]
        flows = [[Rat(0)] * m for _ in range(n)]
        for (i, j), idx in findex.items():
            flows[i][j] = x[idx]
        report = check_equilibrium(inst, prices, flows)
        if not report.ok:  # pragma: no cover - would indicate an LP bug
            continue
        scale = prices[0]
        prices = tuple(p / scale for p in prices)
        flows = tuple(tuple(f / scale for f in row) for row in flows)
        return prices, flows
    raise NoEquilibriumFound(
        "no demand support admits an equilibrium; model assumptions violated"
    )


# ---------------------------------------------------------------------------
# balanced surpluses without flows
# ---------------------------------------------------------------------------


def balanced_surpluses_reference(net: EqualityNetwork) -> tuple:
    """Surplus vector of the balanced flow, by subset-enumeration peeling.

    Independent of the flow kernels: levels are peeled top-down, each level
    value is max_A (Σ_A budgets − value(Γ(A)))/|A| over nonempty subsets of the
    remaining agents, and the level's member set is the union of all subsets
    that are tight under clamped excesses (which pulls in zero-cap riders).
    Exponential in n; intended for n ≤ ~10.
    """
    n, m = net.n, net.m
    active_a = sorted(range(n))
    active_g = set(range(m))
    surplus: list = [None] * n
    while active_a:
        gamma_of = {
            i: frozenset(j for j in net.edges[i] if j in active_g)
            for i in active_a
        }

        def h(A):
            goods = frozenset().union(*(gamma_of[i] for i in A))
            money = sum((net.budgets[i] for i in A), Rat(0)) - sum(
                (net.values[j] for j in goods), Rat(0)
            )
            return money / len(A)

        lam = Rat(0)
        k = len(active_a)
        for mask in range(1, 1 << k):
            A = [active_a[t] for t in range(k) if mask >> t & 1]
            lam = max(lam, h(A))
        if lam <= 0:
            for i in active_a:
                surplus[i] = Rat(0)
            break

        tight: set[int] = set()
        for mask in range(1, 1 << k):
            A = [active_a[t] for t in range(k) if mask >> t & 1]
            goods = frozenset().union(*(gamma_of[i] for i in A))
            caps = sum((max(net.budgets[i] - lam, Rat(0)) for i in A), Rat(0))
            val = sum((net.values[j] for j in goods), Rat(0))
            if caps == val:
                tight.update(A)
        for i in tight:
            surplus[i] = min(net.budgets[i], lam)
        removed_goods = frozenset().union(*(gamma_of[i] for i in tight))
        active_a = [i for i in active_a if i not in tight]
        active_g -= removed_goods
    return tuple(surplus)
