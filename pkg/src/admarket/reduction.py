"""Reduction from general endowments to the identity-endowment special form.

Every positive endowment cell (i, j) becomes one special agent owning one
special good: the persona of agent i as the owner of good j. A persona values
a copy (l, k) of good k by how much of k that copy actually is, w_lk, times
the original utility u_ik. Equilibria transfer back by dividing each copy's
price by its size and summing flows over personas and copies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import oracle
from .errors import CertificationFailed, InconsistentLift
from .market import MarketInstance, validate_instance
from .rationals import Rat


@dataclass(frozen=True)
class ReductionMap:
    """Index bookkeeping between an original market and its special form."""

    pairs: tuple  # special index -> (agent, good) of the positive cell
    index: dict  # (agent, good) -> special index
    original_n: int
    original_m: int

    @property
    def size(self) -> int:
        return len(self.pairs)

    def to_json(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "original_n": self.original_n,
            "original_m": self.original_m,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ReductionMap":
        pairs = tuple((int(a), int(g)) for a, g in data["pairs"])
        return cls(
            pairs=pairs,
            index={p: k for k, p in enumerate(pairs)},
            original_n=int(data["original_n"]),
            original_m=int(data["original_m"]),
        )


def reduce_to_special(inst: MarketInstance) -> tuple[MarketInstance, ReductionMap]:
    """Build the identity-endowment market of ownership personas."""
    validate_instance(inst)
    pairs = [
        (i, j)
        for i in range(inst.n)
        for j in range(inst.m)
        if inst.w[i][j] > 0
    ]
    size = len(pairs)
    index = {p: k for k, p in enumerate(pairs)}
    u = [[0] * size for _ in range(size)]
    for a, (i, _j) in enumerate(pairs):
        for b, (l, k) in enumerate(pairs):
            u[a][b] = inst.w[l][k] * inst.u[i][k]
    w = [[1 if a == b else 0 for b in range(size)] for a in range(size)]
    special = MarketInstance(u=u, w=w)
    validate_instance(special)
    rmap = ReductionMap(
        pairs=tuple(pairs), index=index, original_n=inst.n, original_m=inst.m
    )
    return special, rmap


def lift_solution(
    inst: MarketInstance,
    rmap: ReductionMap,
    prices: Sequence,
    flows: Optional[Sequence] = None,
    certify: bool = True,
):
    """Map special-form prices (and optionally flows) back to the original.

    A copy (l, k) sells w_lk units of good k, so the original unit price is
    p_(l,k) / w_lk — and every copy of the same good must agree on it, else
    InconsistentLift. Flows lift by summation. With certify=True (default)
    the lifted solution must pass the independent equilibrium certificate.
    """
    if inst.n != rmap.original_n or inst.m != rmap.original_m:
        raise ValueError("reduction map does not match this instance")
    prices = [Rat(p) for p in prices]
    if len(prices) != rmap.size:
        raise ValueError(
            f"expected {rmap.size} special prices, got {len(prices)}"
        )
    lifted: list = [None] * inst.m
    witness = [None] * inst.m
    for idx, (l, k) in enumerate(rmap.pairs):
        unit = prices[idx] / inst.w[l][k]
        if lifted[k] is None:
            lifted[k] = unit
            witness[k] = (l, idx)
        elif lifted[k] != unit:
            raise InconsistentLift(
                f"good {k}: copy owned by agent {l} implies unit price "
                f"{unit} but copy owned by agent {witness[k][0]} implies "
                f"{lifted[k]}"
            )
    if any(p is None for p in lifted):
        raise InconsistentLift("some original good has no priced copy")

    lifted_flows = None
    if flows is not None:
        if hasattr(flows, "as_matrix"):  # EqualityFlow straight from solve()
            flows = flows.as_matrix()
        f = [[Rat(x) for x in row] for row in flows]
        lifted_flows = [[Rat(0)] * inst.m for _ in range(inst.n)]
        for a, (i, _j) in enumerate(rmap.pairs):
            for b, (_l, k) in enumerate(rmap.pairs):
                lifted_flows[i][k] += f[a][b]

    if certify:
        report = oracle.check_equilibrium(inst, lifted, lifted_flows)
        if not report.ok:
            raise CertificationFailed(
                "lifted solution fails the equilibrium certificate",
                report=report,
            )
    return tuple(lifted), (
        tuple(tuple(row) for row in lifted_flows)
        if lifted_flows is not None
        else None
    )
