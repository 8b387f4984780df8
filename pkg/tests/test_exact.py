import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

from solidcdl.exact import Exact, ExactnessError

rationals = st.fractions(min_value=-100, max_value=100, max_denominator=20)
monomials = st.builds(lambda q, k: Exact.rational(q) * Exact.pi() ** k, rationals, st.integers(0, 3))
values = st.builds(lambda a, b: a + b, monomials, monomials)


@given(values, values, values)
def test_ring_laws(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert a * (b + c) == a * b + a * c
    assert a - a == Exact.rational(0)


@given(monomials, monomials)
def test_division_inverts_multiplication(a, b):
    assume(not b.is_zero())
    assert (a * b) / b == a


@given(st.integers(1, 500))
def test_square_root_squares_back(n):
    r = Exact.rational(n).root(2)
    assert r * r == Exact.rational(n)
    assert math.isclose(float(r), math.sqrt(n))


@given(st.integers(1, 60), st.integers(1, 60))
def test_radicals_are_canonical(a, b):
    # sqrt(a)*sqrt(b) and sqrt(a*b) are the same value, so they must be equal structurally
    assert Exact.rational(a).root(2) * Exact.rational(b).root(2) == Exact.rational(a * b).root(2)


@given(values)
def test_float_matches_terms(v):
    assert math.isfinite(float(v))


def test_rendering():
    assert str(Exact.rational(36) * Exact.pi()) == "36*pi"
    assert str(Exact.rational(12).root(2)) == "2*sqrt(3)"
    assert str(Exact.rational(Fraction(32, 3)) * Exact.pi()) == "32/3*pi"
    assert str(Exact.rational(5)) == "5"


def test_cube_root():
    assert Exact.rational(8).root(3) == Exact.rational(2)


def test_ordering_uses_magnitude():
    assert Exact.rational(3) < Exact.pi() < Exact.rational(4)


@pytest.mark.parametrize("op", [lambda: Exact.rational(-4).root(2),
                                lambda: (Exact.pi() + 1).root(2),
                                lambda: 1 / (Exact.pi() + 1)])
def test_inexact_operations_raise(op):
    with pytest.raises(ExactnessError):
        op()
