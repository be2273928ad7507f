"""Instance generators: adversarial families and seeded random markets.

The two hard families drive the iteration counts of the price-update solver
up: a two-good-per-agent chain whose equilibrium prices decay geometrically,
and a prime-block construction whose blocks must be raised one after another
in a forced order. Both use identity endowments, so they are also the
canonical inputs for the special-form pipeline.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .errors import BadU, GivingUp, MarketValidationError, OddN, TooSmallN
from .market import (
    MarketInstance,
    check_irreducible,
    validate_instance,
)


def gen_hard_chain(n: int, U: int) -> MarketInstance:
    """Chain of n agents/goods with equilibrium price ratio U^(n/2-1).

    Agent 1 anchors the chain by liking goods 1 and 2 equally at U; every
    later agent likes its predecessor's good at U and (except the last) its
    successor's good at 1. Endowments are the identity. Requires even n >= 4
    and U >= 2.
    """
    if n < 4 or n % 2:
        raise OddN(f"chain size must be even and >= 4, got {n}")
    if U < 2:
        raise BadU(f"chain utility scale must be >= 2, got {U}")
    u = [[0] * n for _ in range(n)]
    u[0][0] = U
    u[0][1] = U
    for i in range(1, n):
        u[i][i - 1] = U
        if i < n - 1:
            u[i][i + 1] = 1
    w = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    inst = MarketInstance(u=u, w=w)
    validate_instance(inst)
    assert check_irreducible(inst)  # holds by construction: the chain is one cycle
    return inst


@dataclass(frozen=True)
class BlockSpec:
    """One block: `size` agents owning `size` goods, `high` of them popular."""

    prime: int
    high: int  # number of high-demand goods (and their owning agents)
    agents: tuple  # global agent indices, ascending
    goods: tuple  # global good indices, ascending

    @property
    def size(self) -> int:
        return self.prime

    @property
    def high_goods(self) -> tuple:
        return self.goods[: self.high]

    @property
    def high_agents(self) -> tuple:
        return self.agents[: self.high]

    @property
    def low_goods(self) -> tuple:
        return self.goods[self.high :]

    @property
    def ratio(self):
        return (self.prime - self.high, self.prime)  # (i-j)/i as a pair


@dataclass(frozen=True)
class BlocksLayout:
    """Placement of every block plus the forced processing order."""

    blocks: tuple  # BlockSpec, construction order
    order: tuple  # indices into blocks, decreasing (i-j)/i
    terminal: BlockSpec  # the final size-n block

    def to_json(self) -> dict:
        def enc(b: BlockSpec) -> dict:
            return {
                "prime": b.prime,
                "high": b.high,
                "agents": list(b.agents),
                "goods": list(b.goods),
            }

        return {
            "blocks": [enc(b) for b in self.blocks],
            "order": list(self.order),
            "terminal": enc(self.terminal),
        }


def _primes_below(x: int) -> list[int]:
    out = []
    for c in range(2, x):
        if all(c % p for p in out):
            out.append(c)
    return out


def gen_hard_blocks(n: int, U: int) -> tuple[MarketInstance, BlocksLayout]:
    """Prime-block market forcing one popular-good climb per block.

    For every prime i < n^(1/3) and every 1 <= j < i there is a block of i
    agents owning i goods (identity endowments), whose first j goods are in
    high demand: every agent of the block likes each of them at 2U. Blocks
    are chained in decreasing (i-j)/i order: the first block's high-demand
    agents like every block's low-demand goods at 2, and each later block's
    high-demand agents like the previous block's high-demand goods at 2. A
    final block of n agents with diagonal utility U anchors the scale:
    its agents each like the first ordered block's first good at 1, and that
    block's high-demand agents like every terminal good at 1.

    Requires n >= 9 (so at least the prime-2 block exists) and U >= 2.
    """
    if n < 9:
        raise TooSmallN(f"block construction needs n >= 9, got {n}")
    if U < 2:
        raise BadU(f"block utility scale must be >= 2, got {U}")
    cube_root = round(n ** (1 / 3))
    while cube_root**3 > n:
        cube_root -= 1
    while (cube_root + 1) ** 3 <= n:
        cube_root += 1

    specs: list[BlockSpec] = []
    cursor = 0
    for prime in _primes_below(cube_root + 1):
        for j in range(1, prime):
            agents = tuple(range(cursor, cursor + prime))
            goods = tuple(range(cursor, cursor + prime))
            specs.append(BlockSpec(prime, j, agents, goods))
            cursor += prime
    terminal = BlockSpec(
        n, 0, tuple(range(cursor, cursor + n)), tuple(range(cursor, cursor + n))
    )
    cursor += n
    total = cursor

    u = [[0] * total for _ in range(total)]
    w = [[1 if i == j else 0 for j in range(total)] for i in range(total)]

    for b in specs:
        for agent in b.agents:
            for good in b.high_goods:
                u[agent][good] = 2 * U

    # decreasing (i-j)/i, ties broken by construction order
    order = tuple(
        sorted(range(len(specs)), key=lambda k: (-Fraction(*specs[k].ratio), k))
    )
    first = specs[order[0]]
    for agent in first.high_agents:
        for b in specs:
            for good in b.low_goods:
                u[agent][good] = 2
    for pos in range(1, len(order)):
        prev = specs[order[pos - 1]]
        cur = specs[order[pos]]
        for agent in cur.high_agents:
            for good in prev.high_goods:
                u[agent][good] = 2

    for k, agent in enumerate(terminal.agents):
        u[agent][terminal.goods[k]] = U
        u[agent][first.goods[0]] = 1
    for agent in first.high_agents:
        for good in terminal.goods:
            u[agent][good] = 1

    inst = MarketInstance(u=u, w=w)
    validate_instance(inst)
    assert check_irreducible(inst)  # the inter-block chain closes one big cycle
    layout = BlocksLayout(
        blocks=tuple(specs), order=order, terminal=terminal
    )
    return inst, layout


_RANDOM_ATTEMPTS = 2000


def gen_random(
    n: int,
    m: int,
    U: int,
    W: int,
    density: float = 0.5,
    seed: int = 0,
) -> MarketInstance:
    """Seeded random valid irreducible market; deterministic per arguments.

    Entries are drawn independently: with probability `density` a cell gets a
    uniform value in 1..U (utilities) or 1..W (endowments), else zero.
    Invalid or reducible draws are discarded; after 2000 attempts GivingUp is
    raised (plausible only for extreme density/size combinations).
    """
    if n < 1 or m < 1 or U < 1 or W < 1:
        raise ValueError("n, m, U, W must all be positive")
    if not 0 < density <= 1:
        raise ValueError(f"density must be in (0, 1], got {density}")
    rng = random.Random((seed, n, m, U, W, density).__repr__())
    for _ in range(_RANDOM_ATTEMPTS):
        u = [
            [rng.randint(1, U) if rng.random() < density else 0 for _ in range(m)]
            for _ in range(n)
        ]
        w = [
            [rng.randint(1, W) if rng.random() < density else 0 for _ in range(m)]
            for _ in range(n)
        ]
        inst = MarketInstance(u=u, w=w)
        try:
            validate_instance(inst)
        except MarketValidationError:
            continue
        if not check_irreducible(inst):
            continue
        return inst
    raise GivingUp(
        f"no valid irreducible market in {_RANDOM_ATTEMPTS} draws "
        f"(n={n}, m={m}, density={density}, seed={seed})"
    )
