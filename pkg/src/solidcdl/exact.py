"""Exact arithmetic over rationals, powers of pi and rational powers of primes.

An :class:`Exact` is a finite sum of monomials ``c * pi**k * p1**e1 * p2**e2 ...``
where ``c`` is a rational, ``k`` any rational and every prime exponent lies in
``[0, 1)``.  Keeping prime exponents reduced makes the representation canonical,
so equality (and the zero test) is structural.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import total_ordering

PI = "pi"

# A monomial key is a sorted tuple of (base, exponent) pairs; base is PI or a prime.
MonoKey = tuple


class ExactnessError(ArithmeticError):
    """The requested operation has no representation in the exact domain."""


def _factor(n: int) -> dict[int, int]:
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _sort_key(base):
    # pi sorts before the primes
    return (0, 0) if base == PI else (1, base)


def _normalize(coeff: Fraction, powers: dict) -> tuple[Fraction, MonoKey]:
    """Fold integral parts of prime exponents into the coefficient."""
    reduced = {}
    for base, exp in powers.items():
        if exp == 0:
            continue
        if base == PI:
            reduced[PI] = reduced.get(PI, Fraction(0)) + exp
            continue
        whole = math.floor(exp)
        frac = exp - whole
        if whole:
            coeff *= Fraction(base) ** whole
        if frac:
            reduced[base] = reduced.get(base, Fraction(0)) + frac
    key = tuple(sorted(((b, Fraction(e)) for b, e in reduced.items() if e != 0),
                       key=lambda item: _sort_key(item[0])))
    return coeff, key


def _mono_mul(a: MonoKey, b: MonoKey) -> tuple[Fraction, MonoKey]:
    powers: dict = dict(a)
    for base, exp in b:
        powers[base] = powers.get(base, Fraction(0)) + exp
    return _normalize(Fraction(1), powers)


def _rational_root(q: Fraction, n: int) -> tuple[Fraction, MonoKey]:
    """``q ** (1/n)`` for positive ``q`` as a normalized monomial."""
    powers: dict = {}
    for p, e in _factor(q.numerator).items():
        powers[p] = powers.get(p, Fraction(0)) + Fraction(e, n)
    for p, e in _factor(q.denominator).items():
        powers[p] = powers.get(p, Fraction(0)) - Fraction(e, n)
    return _normalize(Fraction(1), powers)


@total_ordering
class Exact:
    """Immutable exact value; see the module docstring for the representation."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms=None):
        clean = {}
        for key, c in (terms or {}).items():
            if c:
                clean[key] = clean.get(key, Fraction(0)) + Fraction(c)
        self._terms: tuple = tuple(sorted(((k, c) for k, c in clean.items() if c),
                                          key=lambda kc: _key_order(kc[0])))
        self._hash = hash(self._terms)

    # construction -------------------------------------------------------

    @classmethod
    def rational(cls, value) -> Exact:
        return cls({(): Fraction(value)})

    @classmethod
    def pi(cls) -> Exact:
        return cls({((PI, Fraction(1)),): Fraction(1)})

    @classmethod
    def _mono(cls, coeff: Fraction, key: MonoKey) -> Exact:
        return cls({key: coeff})

    # inspection ---------------------------------------------------------

    @property
    def terms(self) -> tuple:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return self.is_zero() or (len(self._terms) == 1 and self._terms[0][0] == ())

    def as_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ExactnessError(f"{self} is not rational")
        return self._terms[0][1] if self._terms else Fraction(0)

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    def __float__(self) -> float:
        total = 0.0
        for key, c in self._terms:
            v = float(c)
            for base, exp in key:
                v *= (math.pi if base == PI else float(base)) ** float(exp)
            total += v
        return total

    # arithmetic ---------------------------------------------------------

    def __add__(self, other) -> Exact:
        other = _coerce(other)
        merged = dict(self._terms)
        for k, c in other._terms:
            merged[k] = merged.get(k, Fraction(0)) + c
        return Exact(merged)

    __radd__ = __add__

    def __neg__(self) -> Exact:
        return Exact({k: -c for k, c in self._terms})

    def __sub__(self, other) -> Exact:
        return self + (-_coerce(other))

    def __rsub__(self, other) -> Exact:
        return _coerce(other) - self

    def __mul__(self, other) -> Exact:
        other = _coerce(other)
        out: dict = {}
        for ka, ca in self._terms:
            for kb, cb in other._terms:
                extra, key = _mono_mul(ka, kb)
                out[key] = out.get(key, Fraction(0)) + ca * cb * extra
        return Exact(out)

    __rmul__ = __mul__

    def inverse(self) -> Exact:
        if self.is_zero():
            raise ZeroDivisionError("division by zero")
        if not self.is_monomial():
            raise ExactnessError(f"cannot invert multi-term value {self}")
        (key, c), = self._terms
        powers = {b: -e for b, e in key}
        extra, nkey = _normalize(Fraction(1), powers)
        return Exact._mono(extra / c, nkey)

    def __truediv__(self, other) -> Exact:
        other = _coerce(other)
        if other.is_zero():
            raise ZeroDivisionError("division by zero")
        if other.is_monomial():
            return self * other.inverse()
        # a multi-term divisor only works when self is a rational multiple of it
        (k0, c0) = other._terms[0]
        ratio = dict(self._terms).get(k0, Fraction(0)) / c0
        if other * Exact.rational(ratio) == self:
            return Exact.rational(ratio)
        raise ExactnessError(f"cannot divide {self} by multi-term value {other}")

    def __rtruediv__(self, other) -> Exact:
        return _coerce(other) / self

    def __pow__(self, n: int) -> Exact:
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return (self.inverse()) ** (-n)
        out = Exact.rational(1)
        for _ in range(n):
            out = out * self
        return out

    def root(self, n: int) -> Exact:
        """Principal real ``n``-th root of a positive monomial (or zero)."""
        if self.is_zero():
            return self
        if not self.is_monomial():
            raise ExactnessError(f"cannot take a root of multi-term value {self}")
        (key, c), = self._terms
        if c < 0:
            raise ExactnessError(f"no real positive root of {self}")
        coeff_extra, ckey = _rational_root(c, n)
        extra, mkey = _normalize(Fraction(1), {b: e / n for b, e in key})
        extra2, key2 = _mono_mul(ckey, mkey)
        return Exact._mono(coeff_extra * extra * extra2, key2)

    def sign(self) -> int:
        if self.is_zero():
            return 0
        return 1 if float(self) > 0 else -1

    # comparison ---------------------------------------------------------

    def __eq__(self, other) -> bool:
        try:
            other = _coerce(other)
        except TypeError:
            return NotImplemented
        return self._terms == other._terms

    def __lt__(self, other) -> bool:
        return float(self) < float(_coerce(other))

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Exact({self})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = [_render_mono(k, c) for k, c in self._terms]
        out = parts[0]
        for p in parts[1:]:
            out += f"-{p[1:]}" if p.startswith("-") else f"+{p}"
        return out


def _key_order(key: MonoKey):
    return tuple((_sort_key(b), e) for b, e in key)


def _coerce(x) -> Exact:
    if isinstance(x, Exact):
        return x
    if isinstance(x, (int, Fraction)):
        return Exact.rational(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Exact")


def _render_factor(base, exp: Fraction) -> str:
    if base == PI:
        return "pi" if exp == 1 else f"pi^({exp})" if exp.denominator != 1 or exp < 0 else f"pi^{exp}"
    if exp == Fraction(1, 2):
        return f"sqrt({base})"
    return f"{base}^({exp})"


def _render_mono(key: MonoKey, c: Fraction) -> str:
    factors = [_render_factor(b, e) for b, e in key]
    if not factors:
        return str(c)
    if c == 1:
        return "*".join(factors)
    if c == -1:
        return "-" + "*".join(factors)
    return "*".join([str(c)] + factors)
