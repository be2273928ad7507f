"""Iterative balanced-flow price updates for linear exchange markets.

The engine starts at unit prices, computes a balanced flow on the equality
network, picks the prefix S of highest-surplus agents (policy-specific gap
rule), and multiplies the prices of every good in Γ(S) — and the flow units
already sitting on them — by a factor x > 1. The factor is the smallest of
six candidates: the first new demand edge (x_eq), three surplus-crossing
events between agent types (x_23, x_24, x_13), a type-2 surplus reaching zero
(x_2), and a policy-dependent cap (x_max). Rebalancing after each update can
only shrink the surplus vector; the loop stops when the squared L2 norm of
the agent surpluses drops to the termination threshold, after which the
terminal network is rounded to exact equilibrium prices (see extract).

Performance model: prices are integers over a shared denominator D and flows
are integers over D·lcm(1..n), and the numerators grow by ~log2(x_max) bits
per iteration, reaching hundreds of kilobits on the adversarial families. At
those sizes anything superlinear per operand (big·big products, gcd, rational
canonicalization) costs milliseconds while big·small products cost
microseconds, so the loop restricts itself to the latter: surpluses stay
integer numerators over the common scale, comparisons go through rigorous
truncated-interval bounds with exact big-integer fallback (_pair_lt,
_sumsq_le), and canonical rationals are materialized lazily, outside the
loop, or on small operands only.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

from . import extract as _extract
from .errors import (
    CertificationFailed,
    InvalidFactor,
    InvariantViolation,
    NoSurplus,
    NotIrreducible,
    RankDeficient,
)
from .flow import EqualityFlow, balanced_flow_int, max_flow
from .market import (
    EqualityNetwork,
    MarketInstance,
    build_equality_network,
    check_irreducible,
    validate_instance,
)
from .rationals import Rat, factorial_lcm, format_rational, gcd_int, mpz, num_den


class Policy(enum.Enum):
    GENERAL = "general"
    DGM = "dgm"
    DM = "dm"


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration-cap"
    PRECISION_CAP = "precision-cap"
    # Below the threshold, but the terminal equality structure does not pin a
    # unique positive price vector. Impossible at the default full-precision
    # epsilon; a coarse user-chosen epsilon can stop while distinct network
    # components still admit independent scalings.
    EXTRACTION_FAILED = "extraction-failed"


_R_FLOOR = Rat(60)
_EIGHT_E_SQUARED_BOUND = Rat(5911, 100)  # 8e² ≈ 59.1124; any R ≥ 60 clears it


def default_epsilon(inst: MarketInstance) -> Rat:
    """1 / (8·(n+m)^{4(n+m)}·(UW)^{3(n+m)}) — the full-precision threshold."""
    s = inst.n + inst.m
    uw = inst.max_utility * inst.max_endowment
    return Rat(1, 8 * s ** (4 * s) * uw ** (3 * s))


@dataclass
class SolverConfig:
    """Policy, precision, and observability knobs for solve().

    trace_level controls what in-memory records carry: 0 counters only,
    1 (default) structural records (chosen candidate, S, Γ(S), types, network
    changes), 2 adds exact L1/L2² numerators and price bit sizes, 3 adds full
    prices and surpluses. Levels ≥ 2 keep one huge integer per record per
    field, so on six-digit iteration counts prefer trace_sink: a text stream
    that receives one full JSON line per iteration (norms reduced exactly at
    write time) without retaining anything in memory.
    """

    policy: Policy = Policy.GENERAL
    R: Rat = _R_FLOOR
    epsilon: Optional[Rat] = None  # None = default_epsilon(inst)
    max_iterations: Optional[int] = None
    # Stop once any price numerator exceeds this many bits. Event steps
    # multiply prices by unstructured crossing ratios, and consecutive events
    # (surplus ping-pong between two agent classes) double the representation
    # size each time; the cap turns that exponential tail into a clean stop,
    # after which the terminal snap usually still certifies the exact
    # equilibrium because tied prices stay tied under the update.
    max_price_bits: Optional[int] = None
    trace_level: int = 1
    trace_sink: Optional[TextIO] = None

    def __post_init__(self):
        self.R = Rat(self.R)
        if self.R < _R_FLOOR:
            raise ValueError("R must be a rational >= 60 (which exceeds 8e^2)")
        assert self.R >= _EIGHT_E_SQUARED_BOUND
        if self.epsilon is not None:
            self.epsilon = Rat(self.epsilon)
            if self.epsilon <= 0:
                raise ValueError("epsilon must be positive")
        if self.max_price_bits is not None and self.max_price_bits < 64:
            raise ValueError("max_price_bits must be at least 64")
        if isinstance(self.policy, str):
            self.policy = Policy(self.policy)


@dataclass(frozen=True)
class AgentTypes:
    """How a price rise on Γ(S) moves each agent's surplus.

    t1/t2 ⊂ S split by the sign of Δ_i = Σ_{Γ(S)}(w_ij·p_j - f_ij): owners of
    enough Γ(S) value gain surplus, the rest lose it. t3 agents sit outside S
    but own Γ(S) goods (budget grows, spending doesn't). t4a/t4b are outside
    with no Γ(S) endowment — constant surplus — split by the guard band
    around min_S r.
    """

    t1: tuple[int, ...]
    t2: tuple[int, ...]
    t3: tuple[int, ...]
    t4a: tuple[int, ...]
    t4b: tuple[int, ...]

    def counts(self) -> dict:
        return {
            "t1": len(self.t1),
            "t2": len(self.t2),
            "t3": len(self.t3),
            "t4a": len(self.t4a),
            "t4b": len(self.t4b),
        }


@dataclass(frozen=True)
class Candidates:
    """The six step-factor candidates; None = +inf (no such event)."""

    x_eq: Optional[Rat]
    x_23: Optional[Rat]
    x_24: Optional[Rat]
    x_13: Optional[Rat]
    x_2: Optional[Rat]
    x_max: Rat
    light: bool

    _ORDER = ("x_eq", "x_23", "x_24", "x_13", "x_2", "x_max")

    def choose(self) -> tuple[str, Rat]:
        """Smallest candidate; ties resolve to the earliest name in order."""
        best_name, best = None, None
        for name in self._ORDER:
            val = getattr(self, name)
            if val is None:
                continue
            if best is None or val < best:
                best_name, best = name, val
        return best_name, best


@dataclass(frozen=True)
class IterationRecord:
    """One loop iteration. Norm fields hold raw numerators over `scale`
    (= price denominator · lcm(1..n)), reduced only on access; they are None
    below trace_level 2 because retaining two six-figure-bit integers per
    iteration would dominate memory on long runs."""

    iteration: int
    x_name: str
    x: Rat
    light: bool
    S: tuple[int, ...]
    gamma: tuple[int, ...]
    types: AgentTypes
    network_changed: bool
    l1_num: Optional[int] = None  # trace_level >= 2
    l2sq_num: Optional[int] = None
    scale: Optional[int] = None
    price_bits: Optional[int] = None
    sold: Optional[tuple] = None  # fully-sold goods, trace_level >= 2
    prices: Optional[tuple] = None  # trace_level >= 3
    surpluses: Optional[tuple] = None

    @property
    def l1(self) -> Optional[Rat]:
        if self.l1_num is None:
            return None
        return Rat(self.l1_num, self.scale)

    @property
    def l2sq(self) -> Optional[Rat]:
        if self.l2sq_num is None:
            return None
        return Rat(self.l2sq_num, self.scale * self.scale)

    def trace_json(self) -> dict:
        l1, l2 = self.l1, self.l2sq
        return {
            "iter": self.iteration,
            "x_name": self.x_name,
            "x": format_rational(self.x),
            "light": self.light,
            "S_size": len(self.S),
            "gamma_size": len(self.gamma),
            "l1": None if l1 is None else format_rational(l1),
            "l2sq": None if l2 is None else format_rational(l2),
            "types": self.types.counts(),
        }


@dataclass
class SolveTrace:
    policy: Policy
    epsilon: Rat
    records: list = field(default_factory=list)
    iterations: int = 0
    network_changes: int = 0
    light_steps: int = 0
    heavy_steps: int = 0
    initial_l1: Optional[Rat] = None
    initial_l2sq: Optional[Rat] = None

    def write_jsonl(self, fp: TextIO) -> None:
        for rec in self.records:
            fp.write(json.dumps(rec.trace_json()) + "\n")


@dataclass
class SolveResult:
    status: SolveStatus
    prices: Optional[tuple]  # certified equilibrium prices iff CONVERGED
    flow: Optional[EqualityFlow]  # clearing allocation at .prices
    trace: SolveTrace
    terminal_prices: tuple  # prices when the loop stopped, pre-rounding
    terminal_flow: EqualityFlow  # balanced flow at terminal_prices
    iterations: int
    extraction_error: Optional[str] = None  # set whenever the terminal snap failed

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


# ---------------------------------------------------------------------------
# rigorous comparisons on huge integers
# ---------------------------------------------------------------------------


def _trunc_bounds(x: int, keep: int) -> tuple[int, int, int]:
    """(lo, hi, shift) with lo·2^shift <= x < hi·2^shift, for x >= 0."""
    s = x.bit_length() - keep
    if s <= 0:
        return x, x + 1, 0
    t = x >> s
    return t, t + 1, s


def _pair_lt(a: tuple, b: tuple) -> bool:
    """Exact a[0]/a[1] < b[0]/b[1] for positive pairs.

    Cross products of six-figure-bit operands cost milliseconds, so the
    comparison first tries rigorous 64-bit truncation intervals (sub-µs) and
    multiplies in full only when the intervals overlap — i.e. for genuine
    near-ties, most of which are caught by the exact-equality shortcut.
    """
    an, ad = a
    bn, bd = b
    if an == bn and ad == bd:
        return False
    # Crossing candidates with a shared surplus gap d compare as (s+d)/s vs
    # (s'+d)/s' — monotone in the denominator alone, no products needed.
    t = an - ad
    if t == bn - bd:
        if t > 0:
            return ad > bd
        if t < 0:
            return ad < bd
        return False
    pl, ph, ps = _trunc_bounds(an, 64)
    ql, qh, qs = _trunc_bounds(bd, 64)
    rl, rh, rs = _trunc_bounds(bn, 64)
    sl, sh, ss = _trunc_bounds(ad, 64)
    sp, sq = ps + qs, rs + ss
    shift = sp - sq
    p_lo, p_hi = pl * ql, ph * qh  # an·bd within [p_lo, p_hi)·2^sp
    q_lo, q_hi = rl * sl, rh * sh
    if shift >= 0:
        p_lo, p_hi = p_lo << shift, p_hi << shift
    else:
        q_lo, q_hi = q_lo << -shift, q_hi << -shift
    if p_hi <= q_lo:
        return True
    if q_hi <= p_lo:
        return False
    return an * bd < bn * ad


def _sumsq_le(xs: Sequence, ys: Sequence) -> bool:
    """Exact Σ xs² <= Σ ys² for nonnegative integers.

    The identical-vector case (rebalancing changed nothing) is free; otherwise
    truncated-interval sums decide at escalating precision, with the full
    squarings as a last resort for astronomically close norms.
    """
    if list(xs) == list(ys):
        return True
    for keep in (64, 2048):
        x_lo = x_hi = y_lo = y_hi = 0
        for x in xs:
            lo, hi, s = _trunc_bounds(x, keep)
            x_lo += (lo * lo) << (2 * s)
            x_hi += (hi * hi) << (2 * s)
        for y in ys:
            lo, hi, s = _trunc_bounds(y, keep)
            y_lo += (lo * lo) << (2 * s)
            y_hi += (hi * hi) << (2 * s)
        if x_hi <= y_lo:
            return True
        if y_hi <= x_lo:
            return False
    return sum(x * x for x in xs) <= sum(y * y for y in ys)


# ---------------------------------------------------------------------------
# selection / classification / candidates on integer state
# ---------------------------------------------------------------------------
#
# The _*_int functions below are the single implementation of the per-
# iteration logic; the public Rat-level operations convert and delegate.
# Surpluses enter as integer numerators RN over the common scale D·K, so
# every test below is a big·small product or a plain integer comparison.


def _surplus_order(RN: Sequence[int]) -> list[int]:
    return sorted(range(len(RN)), key=lambda i: (-RN[i], i))


def _select_int(inst, RN, fs, edges, policy: Policy) -> tuple[tuple, frozenset]:
    """S per the policy's gap rule. RN: surplus numerators; fs: spent-anything flags."""
    n = inst.n
    order = _surplus_order(RN)
    if RN[order[0]] <= 0:
        raise NoSurplus("all agents cleared; nothing to select")

    if policy is Policy.DM:
        for pos in range(n - 1):
            # r_l > (1+1/n)·r_next
            if RN[order[pos]] * n > RN[order[pos + 1]] * (n + 1):
                S = order[: pos + 1]
                break
        else:
            S = order
    else:
        S = order  # fallback: no strict drop anywhere = all surpluses equal
        for pos in range(n - 1):
            rn_l = RN[order[pos]]
            if not rn_l > RN[order[pos + 1]]:
                continue
            cand = order[: pos + 1]
            gamma = set()
            for i in cand:
                gamma.update(edges[i])
            ok = True
            for k in order[pos + 1 :]:
                # below the guard band [r_l·n/(n+1), r_l)? order is sorted,
                # so nothing further can be inside either.
                if RN[k] * (n + 1) < rn_l * n:
                    break
                if fs[k]:
                    ok = False
                    break
                if any(inst.w[k][j] > 0 for j in gamma):
                    ok = False
                    break
            if ok:
                S = cand
                break

    gamma = set()
    for i in S:
        gamma.update(edges[i])
    return tuple(sorted(S)), frozenset(gamma)


def _classify_int(inst, S, gamma, RN, P, K, FE) -> tuple[AgentTypes, dict, dict]:
    """Types plus the integer slopes: Δ_num over scale for S, σ_num for T3."""
    S_set = set(S)
    delta: dict[int, int] = {}
    sigma: dict[int, int] = {}
    t1, t2, t3, t4a, t4b = [], [], [], [], []
    rn_min = min(RN[i] for i in S)
    n = inst.n
    for i in range(n):
        own = sum(inst.w[i][j] * P[j] for j in gamma if inst.w[i][j])
        if i in S_set:
            d = own * K - sum(f for j, f in FE[i].items() if j in gamma)
            delta[i] = d
            (t1 if d > 0 else t2).append(i)
        elif own > 0:
            sigma[i] = own * K
            t3.append(i)
        elif RN[i] * (n + 1) >= rn_min * n:
            t4a.append(i)
        else:
            t4b.append(i)
    return (
        AgentTypes(tuple(t1), tuple(t2), tuple(t3), tuple(t4a), tuple(t4b)),
        delta,
        sigma,
    )


def _candidates_int(
    inst, net_edges, S, gamma, types, delta, sigma, RN, P, D, K, R: Rat, policy
):
    """All candidates as integer pairs (num, den); None where no event exists."""
    n, m = inst.n, inst.m

    x_eq = None
    non_gamma = [k for k in range(m) if k not in gamma]
    for i in S:
        for j in net_edges[i]:
            uij = inst.u[i][j]
            for k in non_gamma:
                if inst.u[i][k] > 0:
                    cand = (uij * P[k], inst.u[i][k] * P[j])
                    if cand[0] <= cand[1]:
                        raise InvariantViolation("x_eq candidate not above 1")
                    if x_eq is None or _pair_lt(cand, x_eq):
                        x_eq = cand

    def crossing(d_num: int, slope_num: int):
        # x = 1 + (r_i - r_j)/slope; the common D·K scale cancels exactly
        if d_num <= 0:
            raise InvariantViolation("crossing candidate not above 1")
        return (slope_num + d_num, slope_num)

    x_23 = x_24 = x_13 = x_2 = None
    for i in types.t2:
        for j in types.t3:
            cand = crossing(RN[i] - RN[j], sigma[j] - delta[i])
            if x_23 is None or _pair_lt(cand, x_23):
                x_23 = cand
        if delta[i] < 0:
            for j in types.t4b:
                cand = crossing(RN[i] - RN[j], -delta[i])
                if x_24 is None or _pair_lt(cand, x_24):
                    x_24 = cand
            cand = crossing(RN[i], -delta[i])
            if x_2 is None or _pair_lt(cand, x_2):
                x_2 = cand
    for i in types.t1:
        for j in types.t3:
            if sigma[j] > delta[i]:
                cand = crossing(RN[i] - RN[j], sigma[j] - delta[i])
                if x_13 is None or _pair_lt(cand, x_13):
                    x_13 = cand

    Rn, Rd = num_den(R)
    if policy is Policy.DM:
        light = True
    elif policy is Policy.DGM:
        light = bool(types.t3)
    else:
        threshold = Rn * n**4 * m * inst.max_endowment * D
        light = any(P[j] * Rd < threshold for j in gamma)

    if light:
        k = 0
    elif policy is Policy.DGM:
        k = len(types.t1)
    else:
        k = sum(1 for i in S if any(inst.w[i][j] > 0 for j in gamma))
    if light or k == 0:  # k = 0 falls back to the smaller, always-safe step
        L = Rn * n**3
    else:
        L = Rn * k * n**2
    x_max = (L + Rd, L)

    return x_eq, x_23, x_24, x_13, x_2, x_max, light


def _choose_int(cands: Sequence, names: Sequence[str]) -> tuple[str, tuple]:
    best_name, best = None, None
    for name, val in zip(names, cands):
        if val is None:
            continue
        if best is None or _pair_lt(val, best):
            best_name, best = name, val
    x_eq = cands[0]
    if x_eq is not None and _pair_lt(x_eq, best):
        raise InvariantViolation("chosen factor exceeds x_eq")
    return best_name, best


def _apply_int(P, D, FS, FE, FT, S, gamma, xn: int, xd: int):
    """Eqs (1)-(4): scale Γ(S) prices and the flow already on them by x = xn/xd.

    Prices return over D·xd, flows over (previous flow scale)·xd, so members
    of Γ(S)/S multiply by xn and everything else by xd.
    """
    S_set = set(S)
    newP = [P[j] * xn if j in gamma else P[j] * xd for j in range(len(P))]
    newD = D * xd
    nFS = [FS[i] * xn if i in S_set else FS[i] * xd for i in range(len(FS))]
    nFT = [FT[j] * xn if j in gamma else FT[j] * xd for j in range(len(FT))]
    nFE = [
        {j: f * (xn if j in gamma else xd) for j, f in FE[i].items()}
        for i in range(len(FS))
    ]
    return newP, newD, nFS, nFE, nFT


# ---------------------------------------------------------------------------
# public per-step operations (used by tests and notebooks; solve() uses the
# integer forms directly)
# ---------------------------------------------------------------------------


def _flow_state(net: EqualityNetwork, flow: EqualityFlow):
    """(P, D, FS, FE, FT, K, RN) with flows over lcm(den_prices, den_flow)."""
    if net.prices is None:
        raise ValueError("network carries no prices")
    nums, D = _common_ints(net.prices)
    den = math.lcm(D, flow.den)
    sf = den // flow.den
    FS = [x * sf for x in flow.fs]
    FT = [x * sf for x in flow.ft]
    FE = [{j: f * sf for j, f in row} for row in flow.fe]
    RN = [int(b * den) - FS[i] for i, b in enumerate(net.budgets)]
    return nums, D, FS, FE, FT, den // D, RN


def _common_ints(qs):
    from .rationals import common_denominator

    return common_denominator(qs)


def select_high_surplus_set(
    inst: MarketInstance,
    net: EqualityNetwork,
    flow: EqualityFlow,
    policy: Policy = Policy.GENERAL,
) -> tuple[tuple[int, ...], frozenset[int]]:
    """The prefix S of the surplus order per the policy's gap rule, with Γ(S)."""
    _, _, _, _, _, _, RN = _flow_state(net, flow)
    fs = [x > 0 for x in flow.fs]
    return _select_int(inst, RN, fs, net.edges, policy)


def classify_agents(
    inst: MarketInstance,
    net: EqualityNetwork,
    flow: EqualityFlow,
    S: Sequence[int],
) -> AgentTypes:
    P, D, FS, FE, FT, K, RN = _flow_state(net, flow)
    gamma = set()
    for i in S:
        gamma.update(net.edges[i])
    types, _, _ = _classify_int(inst, tuple(S), gamma, RN, P, K, FE)
    return types


def compute_candidates(
    inst: MarketInstance,
    net: EqualityNetwork,
    flow: EqualityFlow,
    S: Sequence[int],
    config: Optional[SolverConfig] = None,
) -> Candidates:
    config = config or SolverConfig()
    P, D, FS, FE, FT, K, RN = _flow_state(net, flow)
    gamma = set()
    for i in S:
        gamma.update(net.edges[i])
    types, delta, sigma = _classify_int(inst, tuple(S), gamma, RN, P, K, FE)
    xs = _candidates_int(
        inst, net.edges, tuple(S), gamma, types, delta, sigma, RN, P, D, K,
        config.R, config.policy,
    )
    x_eq, x_23, x_24, x_13, x_2, x_max, light = xs

    def as_rat(pair):
        return None if pair is None else Rat(pair[0], pair[1])

    return Candidates(
        x_eq=as_rat(x_eq),
        x_23=as_rat(x_23),
        x_24=as_rat(x_24),
        x_13=as_rat(x_13),
        x_2=as_rat(x_2),
        x_max=as_rat(x_max),
        light=light,
    )


def apply_update(
    inst: MarketInstance,
    net: EqualityNetwork,
    flow: EqualityFlow,
    S: Sequence[int],
    gamma,
    x,
    x_max=None,
) -> tuple[tuple, EqualityFlow]:
    """Scale Γ(S) prices (and the flow on them) by x; returns (p', f' on N_p')."""
    x = Rat(x)
    if x <= 1:
        raise InvalidFactor(f"update factor must exceed 1, got {x}")
    if x_max is not None and x > Rat(x_max):
        raise InvalidFactor(f"update factor {x} exceeds x_max {x_max}")
    P, D, FS, FE, FT, K, _ = _flow_state(net, flow)
    xn, xd = num_den(x)
    newP, newD, nFS, nFE, nFT = _apply_int(P, D, FS, FE, FT, set(S), set(gamma), xn, xd)
    new_prices = tuple(Rat(p, newD) for p in newP)
    new_net = build_equality_network(inst, new_prices)
    new_flow = EqualityFlow(new_net, D * K * xd, nFS, nFT, nFE)
    return new_prices, new_flow._normalized()


# ---------------------------------------------------------------------------
# the solve loop
# ---------------------------------------------------------------------------


class _State:
    """Everything the loop derives from (P, D) in one pass — integers only."""

    __slots__ = ("edges", "edge_set", "B", "V", "FS", "FE", "FT", "RN",
                 "L1N", "maxRN", "scale", "sold", "peel", "_l2n")

    def __init__(self, inst: MarketInstance, P, D, K, seeds=None, keep_sold=None):
        n, m = inst.n, inst.m
        u, w = inst.u, inst.w
        edges = []
        for i in range(n):
            best: list[int] = []
            ui = u[i]
            for j in range(m):
                if ui[j] == 0:
                    continue
                if not best:
                    best = [j]
                    continue
                b = best[0]
                if P[j] == P[b]:  # frequent on co-moving goods; skips products
                    if ui[j] > ui[b]:
                        best = [j]
                    elif ui[j] == ui[b]:
                        best.append(j)
                    continue
                lhs = ui[j] * P[b]
                rhs = ui[b] * P[j]
                if lhs > rhs:
                    best = [j]
                elif lhs == rhs:
                    best.append(j)
            edges.append(tuple(best))
        self.edges = tuple(edges)
        self.edge_set = frozenset(
            (i, j) for i in range(n) for j in self.edges[i]
        )
        self.B = [sum(w[i][j] * P[j] for j in range(m) if w[i][j]) for i in range(n)]
        supply = [sum(w[i][j] for i in range(n)) for j in range(m)]
        self.V = [supply[j] * P[j] for j in range(m)]
        # Seeding the threshold search with the previous iteration's peel
        # usually starts it at the exact level value (consecutive networks
        # differ by at most one scaled component), halving the max-flow count.
        # keep_sold pins the good-side tie-break so saturation is monotone.
        self.FS, self.FE, self.FT, _, self.peel = balanced_flow_int(
            self.B, self.V, self.edges, K, seeds, keep_sold
        )
        self.RN = [self.B[i] * K - self.FS[i] for i in range(n)]
        self.L1N = sum(self.RN)
        self.maxRN = max(self.RN)
        self.scale = D * K
        self.sold = frozenset(
            j for j in range(m) if self.FT[j] == self.V[j] * K
        )
        self._l2n = None

    def l2n(self) -> int:
        """Σ RN² — n full-width squarings, so computed once and only on demand."""
        if self._l2n is None:
            self._l2n = sum(x * x for x in self.RN)
        return self._l2n

    def l1(self) -> Rat:
        return Rat(self.L1N, self.scale)

    def l2sq(self) -> Rat:
        return Rat(self.l2n(), self.scale * self.scale)


def _l2_above_threshold(state: _State, en: int, ed: int) -> bool:
    """Exact test of ‖r‖₂² > ε² (ε = en/ed), cheap while clearly above.

    Since ‖r‖₂² >= max_i r_i², one big·small cross-multiplication settles
    every iteration whose max surplus still exceeds ε; the endgame (at most a
    few hundred iterations) pays for the exact squared comparison.
    """
    if state.maxRN * ed > en * state.scale:
        return True
    t = en * state.scale
    return state.l2n() * (ed * ed) > t * t


def _check_state_invariants(inst, cfg_bounds, state: _State, P, D, prev: Optional[_State]):
    l1_cap, price_cap, budget_cap = cfg_bounds
    if state.L1N > l1_cap * state.scale:
        raise InvariantViolation("L1 surplus exceeds n·m·W")
    if prev is not None and _pair_lt(
        (prev.L1N, prev.scale), (state.L1N, state.scale)
    ):
        raise InvariantViolation("L1 surplus increased across an iteration")
    if all(P[j] != D for j in range(inst.m)):
        raise InvariantViolation("no good has price exactly 1")
    if any(P[j] > price_cap * D for j in range(inst.m)):
        raise InvariantViolation("price bound exceeded")
    if any(b > budget_cap * D for b in state.B):
        raise InvariantViolation("budget bound exceeded")
    if prev is not None and not prev.sold <= state.sold:
        raise InvariantViolation("a fully sold good became unsold")


def solve(inst: MarketInstance, config: Optional[SolverConfig] = None) -> SolveResult:
    """Run the price-update loop to the termination threshold, then round.

    Returns exact equilibrium prices (certified independently at the end)
    plus the full per-iteration trace. Status CONVERGED means exactly that
    certified prices are present — including runs stopped early by
    max_iterations or max_price_bits whose terminal snap nevertheless
    certified. A capped run whose snap fails keeps ITERATION_CAP or
    PRECISION_CAP; a run below the threshold whose snap fails (possible only
    with a coarse user-chosen epsilon, when the terminal equality structure
    under-determines prices) reports EXTRACTION_FAILED with the reason, and
    all three carry the non-terminal state instead of raising.
    """
    config = config or SolverConfig()
    validate_instance(inst)
    if not check_irreducible(inst):
        raise NotIrreducible("the interest/ownership digraph is not strongly connected")

    n, m = inst.n, inst.m
    U, W = inst.max_utility, inst.max_endowment
    # GMP-backed integers seed every derived quantity in the loop (budgets,
    # flows, surplus numerators): at the 10^5-bit sizes x_max growth produces,
    # they outrun CPython ints several-fold on mul/gcd.
    K = mpz(factorial_lcm(n))
    epsilon = config.epsilon if config.epsilon is not None else default_epsilon(inst)
    en, ed = num_den(epsilon)
    trace = SolveTrace(policy=config.policy, epsilon=epsilon)

    l1_cap = n * m * W
    price_cap = max(2, U) ** (m - 1) * W ** (2 * m - 2)
    budget_cap = max(2, U) ** m * W ** (2 * m)
    bounds = (l1_cap, price_cap, budget_cap)

    P = [mpz(1)] * m
    D = mpz(1)
    state = _State(inst, P, D, K)
    _check_state_invariants(inst, bounds, state, P, D, None)
    trace.initial_l1 = state.l1()
    trace.initial_l2sq = state.l2sq()

    status = SolveStatus.CONVERGED
    while _l2_above_threshold(state, en, ed):
        if config.max_iterations is not None and trace.iterations >= config.max_iterations:
            status = SolveStatus.ITERATION_CAP
            break
        if config.max_price_bits is not None and any(
            p.bit_length() > config.max_price_bits for p in P
        ):
            status = SolveStatus.PRECISION_CAP
            break
        it = trace.iterations + 1

        S, gamma = _select_int(
            inst, state.RN, [x > 0 for x in state.FS], state.edges, config.policy
        )
        # Γ(S) must be fully sold and fed exclusively by S.
        if not gamma <= state.sold:
            raise InvariantViolation("Γ(S) contains an unsold good")
        S_set = set(S)
        for i in range(n):
            if i not in S_set and any(
                state.FE[i].get(j, 0) > 0 for j in gamma
            ):
                raise InvariantViolation("flow into Γ(S) from outside S")

        types, delta, sigma = _classify_int(
            inst, S, gamma, state.RN, P, K, state.FE
        )
        cands = _candidates_int(
            inst, state.edges, S, gamma, types, delta, sigma, state.RN,
            P, D, K, config.R, config.policy,
        )
        x_eq, x_23, x_24, x_13, x_2, x_max, light = cands
        name, (xn, xd) = _choose_int(
            (x_eq, x_23, x_24, x_13, x_2, x_max),
            Candidates._ORDER,
        )

        newP, newD, nFS, nFE, nFT = _apply_int(
            P, D, state.FS, state.FE, state.FT, S_set, gamma, xn, xd
        )
        # Surplus numerators of the scaled (pre-rebalance) flow f', over
        # newD·K, for the contraction check after rebalancing.
        newB = [
            sum(inst.w[i][j] * newP[j] for j in range(m) if inst.w[i][j])
            for i in range(n)
        ]
        fprime_RN = [newB[i] * K - nFS[i] for i in range(n)]

        # Common factors appear at event steps (structured crossing ratios),
        # essentially never on pure x_max steps — checking there every time
        # would cost m+1 big-integer gcds per iteration for nothing. A sparse
        # periodic sweep catches anything that slips through.
        g = 1
        if xd != 1 and (name != "x_max" or it % 512 == 0):
            g = newD
            for p in newP:
                g = gcd_int(g, p)
            if g > 1:
                newP = [p // g for p in newP]
                newD //= g
        P, D = newP, newD

        prev = state
        state = _State(inst, P, D, K, seeds=prev.peel, keep_sold=prev.sold)
        _check_state_invariants(inst, bounds, state, P, D, prev)
        rebalanced_RN = state.RN if g == 1 else [x * g for x in state.RN]
        if not _sumsq_le(rebalanced_RN, fprime_RN):
            raise InvariantViolation("rebalancing increased the L2 surplus norm")
        removed = prev.edge_set - state.edge_set
        added = state.edge_set - prev.edge_set
        if any(i in S_set or j not in gamma for i, j in removed):
            raise InvariantViolation("update removed an edge not from B∖S into Γ(S)")
        # Γ(S) goods only got relatively pricier, so nobody gains an edge into
        # them. Edges appearing TO outside goods are fine from any agent: at
        # x_eq a member of S picks up its tie, and an outside agent demanding
        # only Γ(S) goods (necessarily flowless) may cross over when a long
        # step passes the point where some outside good catches up.
        if any(j in gamma for _i, j in added):
            raise InvariantViolation("update added an edge into Γ(S)")

        changed = bool(removed or added)
        trace.iterations = it
        trace.network_changes += changed
        if light:
            trace.light_steps += 1
        else:
            trace.heavy_steps += 1
        level = config.trace_level
        if level >= 1:
            trace.records.append(
                IterationRecord(
                    iteration=it,
                    x_name=name,
                    x=Rat(xn, xd),
                    light=light,
                    S=S,
                    gamma=tuple(sorted(gamma)),
                    types=types,
                    network_changed=changed,
                    l1_num=state.L1N if level >= 2 else None,
                    l2sq_num=state.l2n() if level >= 2 else None,
                    scale=state.scale if level >= 2 else None,
                    price_bits=(
                        max(int(p).bit_length() for p in P)
                        if level >= 2
                        else None
                    ),
                    sold=tuple(sorted(state.sold)) if level >= 2 else None,
                    prices=(
                        tuple(Rat(p, D) for p in P) if level >= 3 else None
                    ),
                    surpluses=(
                        tuple(Rat(x, state.scale) for x in state.RN)
                        if level >= 3
                        else None
                    ),
                )
            )
        if config.trace_sink is not None:
            config.trace_sink.write(
                json.dumps(
                    {
                        "iter": it,
                        "x_name": name,
                        "x": format_rational(Rat(xn, xd)),
                        "light": light,
                        "S_size": len(S),
                        "gamma_size": len(gamma),
                        "l1": format_rational(state.l1()),
                        "l2sq": format_rational(state.l2sq()),
                        "types": types.counts(),
                    }
                )
                + "\n"
            )

    terminal_prices = tuple(Rat(p, D) for p in P)
    terminal_net = build_equality_network(inst, terminal_prices)
    if terminal_net.edges != state.edges:
        raise InvariantViolation("terminal network disagrees with loop state")
    terminal_flow = EqualityFlow(
        terminal_net, D * K, state.FS, state.FT, state.FE
    )._normalized()

    # The snap to exact prices is attempted at every stop, not only below the
    # threshold: it certifies its own output, so when it succeeds the result
    # is a true equilibrium no matter why the loop stopped (a capped run that
    # halted next to the answer still returns it), and when it fails a capped
    # run keeps its cap status while a converged run downgrades.
    result_prices, result_flow, extraction_error = None, None, None
    try:
        pstar = _extract.extract_equilibrium(inst, terminal_prices)
    except (RankDeficient, CertificationFailed) as exc:
        if status is SolveStatus.CONVERGED:
            status = SolveStatus.EXTRACTION_FAILED
        extraction_error = str(exc)
    else:
        result_prices = pstar
        result_flow = max_flow(build_equality_network(inst, pstar))
        status = SolveStatus.CONVERGED

    return SolveResult(
        status=status,
        prices=result_prices,
        flow=result_flow,
        trace=trace,
        terminal_prices=terminal_prices,
        terminal_flow=terminal_flow,
        iterations=trace.iterations,
        extraction_error=extraction_error,
    )
