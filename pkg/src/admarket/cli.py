"""Command-line frontend: generate, solve, check, reduce, bench.

All rationals in files and on stdout are exact "num/den" strings (bare
integer when the denominator is 1); --decimal adds approximate decimals for
humans. Exit codes: 0 success, 1 invalid input, 2 iteration cap reached,
3 certification failure.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import click

from .errors import MarketValidationError
from .instances import gen_hard_blocks, gen_hard_chain, gen_random
from .market import MarketInstance
from .oracle import check_equilibrium
from .rationals import format_decimal, format_rational, parse_rational
from .reduction import reduce_to_special
from .solver import Policy, SolveStatus, SolverConfig, solve

_POLICIES = [p.value for p in Policy]


def _write_json(data: dict, path: str | None) -> None:
    text = json.dumps(data, indent=1) + "\n"
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        with open(path, "w") as fp:
            fp.write(text)


def _load_instance(path: str) -> MarketInstance:
    try:
        with open(path) as fp:
            data = json.load(fp)
        return MarketInstance.from_json(data)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        click.echo(f"error: cannot load instance from {path}: {exc}", err=True)
        sys.exit(1)


def _trace_level_from_env(default: int = 1) -> int:
    raw = os.environ.get("AD_TRACE_LEVEL")
    if raw is None:
        return default
    try:
        return max(0, min(3, int(raw)))
    except ValueError:
        click.echo(f"warning: ignoring AD_TRACE_LEVEL={raw!r}", err=True)
        return default


@click.group()
def main():
    """Exact equilibrium computation for linear exchange markets."""


@main.group()
def gen():
    """Write instance files for the generator families."""


@gen.command("chain")
@click.option("--n", type=int, required=True, help="even number of agents >= 4")
@click.option("--u", "U", type=int, default=2, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def gen_chain(n: int, U: int, out):
    """Two-liked-goods chain with equilibrium price ratio U^(n/2-1)."""
    try:
        inst = gen_hard_chain(n, U)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write_json(inst.to_json(), out)


@gen.command("blocks")
@click.option("--n", type=int, required=True, help="market size parameter >= 9")
@click.option("--u", "U", type=int, default=2, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option(
    "--layout",
    type=click.Path(dir_okay=False),
    default=None,
    help="also write the block layout (agents/goods per block, processing order)",
)
def gen_blocks(n: int, U: int, out, layout):
    """Prime-block construction with one forced price-climb per block."""
    try:
        inst, lay = gen_hard_blocks(n, U)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write_json(inst.to_json(), out)
    if layout is not None:
        _write_json(lay.to_json(), layout)


@gen.command("random")
@click.option("--n", type=int, required=True)
@click.option("--m", type=int, required=True)
@click.option("--u", "U", type=int, default=3, show_default=True)
@click.option("--w", "W", type=int, default=3, show_default=True)
@click.option("--density", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def gen_random_cmd(n, m, U, W, density, seed, out):
    """Seeded random valid irreducible market (deterministic per arguments)."""
    try:
        inst = gen_random(n, m, U, W, density=density, seed=seed)
    except (ValueError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write_json(inst.to_json(), out)


@main.command("solve")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--policy",
    type=click.Choice(_POLICIES),
    default=Policy.GENERAL.value,
    show_default=True,
)
@click.option(
    "--epsilon",
    default=None,
    help='termination threshold as a rational, e.g. "1/1000000000000" '
    "(default: the full-precision threshold for the instance)",
)
@click.option("--max-iters", type=int, default=None)
@click.option(
    "--max-price-bits",
    type=int,
    default=None,
    help="stop once a price numerator exceeds this many bits "
    "(guards against event-step representation blowup)",
)
@click.option(
    "--trace",
    "trace_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="stream one JSON line per iteration to this file",
)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--decimal", is_flag=True, help="also print approximate decimals")
def cmd_solve(instance, policy, epsilon, max_iters, max_price_bits, trace_path, out, decimal):
    """Compute exact equilibrium prices of an instance file."""
    inst = _load_instance(instance)
    try:
        eps = None if epsilon is None else parse_rational(epsilon)
    except ValueError as exc:
        click.echo(f"error: bad --epsilon: {exc}", err=True)
        sys.exit(1)

    sink = open(trace_path, "w") if trace_path else None
    try:
        config = SolverConfig(
            policy=Policy(policy),
            epsilon=eps,
            max_iterations=max_iters,
            max_price_bits=max_price_bits,
            trace_level=_trace_level_from_env(),
            trace_sink=sink,
        )
        try:
            res = solve(inst, config)
        except MarketValidationError as exc:
            click.echo(f"error: invalid market: {exc}", err=True)
            sys.exit(1)
    finally:
        if sink is not None:
            sink.close()

    terminal_l2sq = res.terminal_flow.l2sq()
    if res.status is not SolveStatus.CONVERGED:
        if res.status is SolveStatus.ITERATION_CAP:
            click.echo(
                f"status: iteration cap reached after {res.iterations} iterations"
            )
        elif res.status is SolveStatus.PRECISION_CAP:
            click.echo(
                f"status: price size cap reached after {res.iterations} iterations"
            )
        else:
            click.echo(f"iterations: {res.iterations}")
        click.echo(f"extraction: failed ({res.extraction_error})")
        if res.status is SolveStatus.EXTRACTION_FAILED:
            click.echo(
                "hint: rerun with a smaller --epsilon (or none, for the "
                "full-precision default)"
            )
        click.echo(f"terminal l2sq: {format_rational(terminal_l2sq)}")
        if out:
            _write_json(
                {
                    "status": res.status.value,
                    "policy": policy,
                    "iterations": res.iterations,
                    "prices": None,
                },
                out,
            )
        sys.exit(3 if res.status is SolveStatus.EXTRACTION_FAILED else 2)

    click.echo("prices: " + " ".join(format_rational(p) for p in res.prices))
    if decimal:
        click.echo(
            "prices~: " + " ".join(format_decimal(p) for p in res.prices)
        )
    click.echo(f"iterations: {res.iterations}")
    click.echo(f"terminal l2sq: {format_rational(terminal_l2sq)}")
    if decimal:
        click.echo(f"terminal l2sq~: {format_decimal(terminal_l2sq)}")
    click.echo("extraction: certified")
    if out:
        _write_json(
            {
                "status": res.status.value,
                "policy": policy,
                "iterations": res.iterations,
                "epsilon": format_rational(res.trace.epsilon),
                "prices": [format_rational(p) for p in res.prices],
            },
            out,
        )


@main.command("check")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.argument("solution", type=click.Path(exists=True, dir_okay=False))
def cmd_check(instance, solution):
    """Certify a candidate solution file {"prices": [...], "flows": [[...]]?}."""
    inst = _load_instance(instance)
    try:
        with open(solution) as fp:
            data = json.load(fp)
        prices = [parse_rational(s) for s in data["prices"]]
        flows = data.get("flows")
        if flows is not None:
            flows = [[parse_rational(s) for s in row] for row in flows]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        click.echo(f"error: cannot load solution from {solution}: {exc}", err=True)
        sys.exit(1)
    report = check_equilibrium(inst, prices, flows)
    if report.ok:
        click.echo("equilibrium: certified")
        return
    click.echo("equilibrium: REJECTED")
    for v in report.violations:
        click.echo(f"  {v.kind} {v.index}: {v.message}")
    sys.exit(3)


@main.command("reduce")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--map-out", type=click.Path(dir_okay=False), default=None)
def cmd_reduce(instance, out, map_out):
    """Rewrite a general market in the identity-endowment special form."""
    inst = _load_instance(instance)
    try:
        special, rmap = reduce_to_special(inst)
    except MarketValidationError as exc:
        click.echo(f"error: invalid market: {exc}", err=True)
        sys.exit(1)
    _write_json(special.to_json(), out)
    if map_out is not None:
        _write_json(rmap.to_json(), map_out)


def _bench_one(args) -> dict:
    family, n, U, policy, eps_str, timing = args
    if family == "chain":
        inst = gen_hard_chain(n, U)
    else:
        inst, _ = gen_hard_blocks(n, U)
    config = SolverConfig(
        policy=Policy(policy),
        epsilon=parse_rational(eps_str),
        trace_level=0,
    )
    t0 = time.monotonic()
    res = solve(inst, config)
    wall_ms = (time.monotonic() - t0) * 1000
    tr = res.trace
    return {
        "family": family,
        "n": n,
        "policy": policy,
        "iterations": res.iterations,
        "light_steps": tr.light_steps,
        "heavy_steps": tr.heavy_steps,
        "network_changes": tr.network_changes,
        "wall_ms": f"{wall_ms:.0f}" if timing else "",
    }


@main.command("bench")
@click.option("--family", type=click.Choice(["chain", "blocks"]), required=True)
@click.option("--n-list", default="4,6", show_default=True, help="comma-separated sizes")
@click.option("--u", "U", type=int, default=2, show_default=True)
@click.option("--policies", default="general,dgm,dm", show_default=True)
@click.option(
    "--epsilon",
    default="1/1000000000000",
    show_default=True,
    help="termination threshold for every run",
)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option(
    "--timing",
    is_flag=True,
    help="fill the wall_ms column (off by default so repeated runs are identical)",
)
def cmd_bench(family, n_list, U, policies, epsilon, out, jobs, timing):
    """One CSV row per (n, policy): iterations, step mix, network changes."""
    try:
        sizes = [int(x) for x in n_list.split(",") if x.strip()]
        pols = [p.strip() for p in policies.split(",") if p.strip()]
        for p in pols:
            Policy(p)
        parse_rational(epsilon)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)

    tasks = [(family, n, U, p, epsilon, timing) for n in sizes for p in pols]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bench_one, tasks))
    else:
        rows = [_bench_one(t) for t in tasks]

    fields = [
        "family", "n", "policy", "iterations",
        "light_steps", "heavy_steps", "network_changes", "wall_ms",
    ]
    fp = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.DictWriter(fp, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            fp.close()


if __name__ == "__main__":
    main()
