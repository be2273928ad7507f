"""Exact rational arithmetic shims.

Everything numeric in this package is an exact rational. We prefer gmpy2's mpq
(GMP-backed, dramatically faster once numerators reach 10^4+ bits, which the
price-update loop produces as a matter of course) and fall back to the stdlib
Fraction so the package stays importable without gmpy2.

Hot loops deliberately do NOT use Rat: they keep raw integers over a shared
denominator and only build Rat values at boundaries. mpq construction
canonicalizes via gcd, which is cheap when the reduced value is small (the gcd
quotient chain is short) and ruinous between unrelated big integers; the
helpers here exist so the rest of the code never has to think about that.
"""

from __future__ import annotations

import math

try:  # pragma: no cover - exercised implicitly by every test
    from gmpy2 import gcd as gcd_int, mpq as Rat, mpz as _mpz

    HAVE_GMPY2 = True

    def to_int(x) -> int:
        return int(x)

    def mpz(x=0):
        return _mpz(x)

except ImportError:  # pragma: no cover
    from fractions import Fraction as Rat

    HAVE_GMPY2 = False
    gcd_int = math.gcd

    def to_int(x) -> int:
        return int(x)

    def mpz(x=0):
        return int(x)


ZERO = Rat(0)
ONE = Rat(1)


def rat(num, den=1) -> Rat:
    return Rat(num, den)


def num_den(q) -> tuple[int, int]:
    """(numerator, denominator) of a Rat/int, denominator > 0."""
    if isinstance(q, int):
        return q, 1
    return int(q.numerator), int(q.denominator)


def parse_rational(s: str) -> Rat:
    """Parse "3", "-3", or "3/4" (lowest terms not required)."""
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        den = int(b)
        if den == 0:
            raise ValueError(f"zero denominator in rational {s!r}")
        return Rat(int(a), den)
    return Rat(int(s))


def int_str(n: int) -> str:
    """Decimal digits of n, bypassing CPython's int->str length guard.

    Mid-run numerators routinely exceed the default 4300-digit conversion
    cap; GMP's converter has no such limit and is faster anyway.
    """
    if HAVE_GMPY2:
        return _mpz(n).digits(10)
    return str(n)  # pragma: no cover - gmpy2-less fallback


def format_rational(q) -> str:
    """Canonical "num/den" string, bare "num" when the denominator is 1."""
    n, d = num_den(q)
    return int_str(n) if d == 1 else f"{int_str(n)}/{int_str(d)}"


def format_decimal(q, digits: int = 12) -> str:
    """Shortest decimal approximation with `digits` fractional digits."""
    n, d = num_den(q)
    sign = "-" if n < 0 else ""
    n = abs(n)
    whole, rem = divmod(n, d)
    frac = (rem * 10**digits) // d
    s = f"{sign}{int_str(whole)}.{frac:0{digits}d}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def lcm_all(values) -> int:
    out = 1
    for v in values:
        out = math.lcm(out, int(v))
    return out


def factorial_lcm(n: int) -> int:
    """lcm(1..n); clears every denominator produced by dividing by a set size."""
    return lcm_all(range(1, n + 1)) if n >= 1 else 1


def common_denominator(qs) -> tuple[list, int]:
    """Rewrite rationals as integer numerators over one shared denominator."""
    qs = list(qs)
    den = lcm_all(q.denominator for q in map(Rat, qs))
    nums = []
    for q in qs:
        n, d = num_den(Rat(q))
        nums.append(n * (den // d))
    return nums, den
