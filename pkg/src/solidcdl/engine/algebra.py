"""Exact equation solving over attribute terms.

Three moves are repeated until nothing changes:

* substitute known term values into every equation;
* isolate the unknown of any equation left with exactly one unknown
  (linear, pure power ``c*x**k + d`` or quadratic with a monomial
  discriminant; only positive real roots are kept for even powers);
* Gauss-Jordan elimination over the equations that are linear in several
  unknowns.

Every derived value remembers which input equations it depends on, so an
inconsistency is reported together with the equations that produced it.
"""

from __future__ import annotations

from ..cdl import (Attr, Const, DomainError, Equation, Num, Op, UnresolvedError, Var,
                   render_expr, render_fact)
from ..exact import Exact, ExactnessError
from .store import ConditionStore, Contradiction, ContradictionError

ONE = Exact.rational(1)
ZERO = Exact.rational(0)


# --------------------------------------------------------------------------
# sparse multivariate polynomials with Exact coefficients
# a monomial is a sorted tuple of (term_name, power); () is the constant


def _pmul_mono(a: tuple, b: tuple) -> tuple:
    powers = dict(a)
    for t, k in b:
        powers[t] = powers.get(t, 0) + k
    return tuple(sorted(powers.items()))


def p_add(a: dict, b: dict, sign: int = 1) -> dict:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, ZERO) + (c if sign > 0 else -c)
        if v.is_zero():
            out.pop(m, None)
        else:
            out[m] = v
    return out


def p_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = _pmul_mono(ma, mb)
            v = out.get(m, ZERO) + ca * cb
            if v.is_zero():
                out.pop(m, None)
            else:
                out[m] = v
    return out


def p_const(v: Exact) -> dict:
    return {} if v.is_zero() else {(): v}


def p_unknowns(p: dict) -> list[str]:
    return sorted({t for m in p for t, _ in m})


def p_is_const(p: dict) -> bool:
    return all(m == () for m in p)


def p_value(p: dict) -> Exact:
    return p.get((), ZERO)


# --------------------------------------------------------------------------


class EquationSystem:
    """Solved form of a set of equations.

    ``known`` maps term names to ``(value, deps)``; ``rows`` is the reduced
    linear system, each row ``(coeffs, const, deps)`` meaning
    ``sum(coeffs[t] * t) + const == 0``.
    """

    def __init__(self, equations: list[Equation], canonical=None):
        self.equations = list(equations)
        self.canonical = canonical or (lambda t: t)
        self.known: dict[str, tuple[Exact, frozenset]] = {}
        self.rows: list[tuple[dict, Exact, frozenset]] = []
        self.terms: dict[str, object] = {}
        self._solve()

    # -- conversion

    def _term(self, leaf) -> str:
        leaf = self.canonical(leaf)
        name = render_expr(leaf)
        self.terms.setdefault(name, leaf)
        return name

    def to_poly(self, e, deps: set | None = None) -> tuple[dict, dict]:
        """Rational function (numerator, denominator) of ``e`` after
        substituting known values; dependencies are collected into ``deps``."""
        if isinstance(e, Num):
            return p_const(Exact.rational(e.value)), {(): ONE}
        if isinstance(e, Const):
            return p_const(Exact.pi()), {(): ONE}
        if isinstance(e, (Attr, Var)):
            name = self._term(e)
            if name in self.known:
                value, d = self.known[name]
                if deps is not None:
                    deps |= d
                return p_const(value), {(): ONE}
            return {((name, 1),): ONE}, {(): ONE}
        if isinstance(e, Op):
            parts = [self.to_poly(a, deps) for a in e.args]
            if e.op == "Value":
                return parts[0]
            if e.op in ("Add", "Sub"):
                num, den = parts[0]
                for i, (n2, d2) in enumerate(parts[1:]):
                    sign = -1 if e.op == "Sub" else 1
                    if d2 == den:
                        num = p_add(num, n2, sign)
                    else:
                        num = p_add(p_mul(num, d2), p_mul(n2, den), sign)
                        den = p_mul(den, d2)
                return _reduce(num, den)
            if e.op == "Mul":
                num, den = parts[0]
                for n2, d2 in parts[1:]:
                    num, den = p_mul(num, n2), p_mul(den, d2)
                return _reduce(num, den)
            (an, ad), (bn, bd) = parts
            if not bn:
                raise DomainError(f"division by zero in {render_expr(e)}")
            return _reduce(p_mul(an, bd), p_mul(ad, bn))
        raise TypeError(f"not an expression: {e!r}")

    # -- solving

    def _solve(self) -> None:
        while True:
            progress = self._substitution_pass()
            if progress:
                continue
            if not self._elimination_pass():
                break

    def _residual(self, eq_index: int):
        eq = self.equations[eq_index]
        deps = {eq_index}
        try:
            ln, ld = self.to_poly(eq.lhs, deps)
            rn, rd = self.to_poly(eq.rhs, deps)
        except (DomainError, ExactnessError):
            return None, deps
        return p_add(p_mul(ln, rd), p_mul(rn, ld), -1), deps

    def _conflict(self, deps, detail: str):
        eqs = [self.equations[i] for i in sorted(deps)]
        raise ContradictionError(Contradiction(eqs, detail))

    def _substitution_pass(self) -> bool:
        progress = False
        for i in range(len(self.equations)):
            poly, deps = self._residual(i)
            if poly is None:
                continue
            unknowns = p_unknowns(poly)
            if not unknowns:
                if p_value(poly).is_zero():
                    continue
                self._conflict(deps, f"{render_fact(self.equations[i])} reduces to "
                                     f"{p_value(poly)} = 0")
            if len(unknowns) == 1:
                value = _isolate(poly, unknowns[0])
                if value is not None:
                    self.known[unknowns[0]] = (value, frozenset(deps))
                    progress = True
        return progress

    def _elimination_pass(self) -> bool:
        linear = []
        for i in range(len(self.equations)):
            poly, deps = self._residual(i)
            if poly is None:
                continue
            if len(p_unknowns(poly)) < 2:
                continue
            if any(len(m) > 1 or (m and m[0][1] != 1) for m in poly):
                continue
            coeffs = {m[0][0]: c for m, c in poly.items() if m}
            linear.append((coeffs, p_value(poly), frozenset(deps)))
        self.rows = []
        for row in linear:
            self._add_row(*row)
        progress = False
        for coeffs, const, deps in self.rows:
            if len(coeffs) == 1:
                (t, c), = coeffs.items()
                if t not in self.known:
                    try:
                        self.known[t] = (-const / c, deps)
                        progress = True
                    except (ExactnessError, ZeroDivisionError):
                        pass
        return progress

    def _reduce_row(self, coeffs: dict, const: Exact, deps: frozenset):
        for pc, pconst, pdeps in self.rows:
            pivot = next(iter(pc))
            if pivot in coeffs:
                f = coeffs[pivot]
                coeffs = dict(coeffs)
                for t, c in pc.items():
                    v = coeffs.get(t, ZERO) - f * c
                    if v.is_zero():
                        coeffs.pop(t, None)
                    else:
                        coeffs[t] = v
                const = const - f * pconst
                deps = deps | pdeps
        return coeffs, const, deps

    def _add_row(self, coeffs: dict, const: Exact, deps: frozenset) -> None:
        coeffs, const, deps = self._reduce_row(coeffs, const, deps)
        if not coeffs:
            if not const.is_zero():
                self._conflict(deps, "linear elimination derives a nonzero constant")
            return
        pivot = next((t for t in sorted(coeffs) if coeffs[t].is_monomial()), None)
        if pivot is None:
            return
        inv = coeffs[pivot].inverse()
        ordered = {pivot: ONE}
        for t in sorted(coeffs):
            if t != pivot:
                ordered[t] = coeffs[t] * inv
        const = const * inv
        # back-substitute into the existing rows to keep reduced form
        updated = []
        for pc, pconst, pdeps in self.rows:
            if pivot in pc:
                f = pc[pivot]
                nc = dict(pc)
                for t, c in ordered.items():
                    v = nc.get(t, ZERO) - f * c
                    if v.is_zero():
                        nc.pop(t, None)
                    else:
                        nc[t] = v
                updated.append((nc, pconst - f * const, pdeps | deps))
            else:
                updated.append((pc, pconst, pdeps))
        updated.append((ordered, const, deps))
        self.rows = updated

    # -- queries

    def value(self, expr) -> tuple[Exact, frozenset]:
        """Exact value of ``expr`` and the equations it rests on."""
        deps: set = set()
        num, den = self.to_poly(expr, deps)
        if not p_unknowns(num) and not p_unknowns(den):
            try:
                return p_value(num) / p_value(den), frozenset(deps)
            except (ExactnessError, ZeroDivisionError) as exc:
                raise DomainError(str(exc)) from None
        if p_unknowns(den) or any(len(m) > 1 or (m and m[0][1] != 1) for m in num):
            raise UnresolvedError(self._leaves(p_unknowns(num) + p_unknowns(den)))
        coeffs = {m[0][0]: c for m, c in num.items() if m}
        coeffs, const, d2 = self._reduce_row(coeffs, p_value(num), frozenset(deps))
        if coeffs:
            raise UnresolvedError(self._leaves(sorted(coeffs)))
        try:
            return const / p_value(den), d2
        except ExactnessError as exc:
            raise DomainError(str(exc)) from None

    def _leaves(self, names) -> list:
        return [self.terms[n] for n in dict.fromkeys(names)]


def _reduce(num: dict, den: dict) -> tuple[dict, dict]:
    if p_is_const(den) and den and p_value(den).is_monomial():
        inv = p_value(den).inverse()
        return p_mul(num, {(): inv}), {(): ONE}
    return num, den


def _isolate(poly: dict, x: str) -> Exact | None:
    by_degree: dict[int, Exact] = {}
    for m, c in poly.items():
        k = m[0][1] if m else 0
        by_degree[k] = by_degree.get(k, ZERO) + c
    degrees = sorted(d for d, c in by_degree.items() if not c.is_zero())
    c0 = by_degree.get(0, ZERO)
    try:
        if degrees == [1] or degrees == [0, 1]:
            return -c0 / by_degree[1]
        if len(degrees) == 1 and degrees[0] > 1:
            return ZERO
        if len(degrees) == 2 and degrees[0] == 0:
            k = degrees[1]
            rhs = -c0 / by_degree[k]
            if not rhs.is_monomial():
                return None
            if rhs.sign() > 0:
                return rhs.root(k)
            if k % 2 == 1:
                return -((-rhs).root(k))
            return None
        if degrees == [0, 1, 2]:
            a, b = by_degree[2], by_degree[1]
            disc = b * b - Exact.rational(4) * a * c0
            if disc.sign() < 0 or not (disc.is_zero() or disc.is_monomial()):
                return None
            r = disc.root(2)
            two_a = Exact.rational(2) * a
            roots = {(-b + r) / two_a, (-b - r) / two_a}
            positive = [v for v in roots if v.sign() > 0]
            return positive[0] if len(positive) == 1 else None
    except (ExactnessError, ZeroDivisionError):
        return None
    return None


# --------------------------------------------------------------------------


def system_for(store: ConditionStore) -> EquationSystem:
    """Solved equation system of a store (cached until the store changes)."""
    cached = getattr(store, "_system", None)
    eqs = store.equation_list()
    if cached is not None and cached[0] == len(eqs):
        return cached[1]
    system = EquationSystem(eqs, store.kb.canonical_term if store.kb else None)
    store._system = (len(eqs), system)
    return system


def solve_equations(store: ConditionStore, goal) -> Exact:
    """Exact value of ``goal`` entailed by the store's equations.

    Raises :class:`UnresolvedError` when the equations do not determine the
    goal and :class:`ContradictionError` when they are inconsistent.
    """
    return system_for(store).value(goal)[0]


def check_consistency(store: ConditionStore) -> None:
    system_for(store)


def minimal_conflict(equations: list[Equation], canonical=None) -> list[Equation]:
    """Shrink an inconsistent equation list to a subset-minimal inconsistent core.

    Deletion filter: drop each equation in turn and keep the drop whenever
    the remainder is still inconsistent.
    """
    def inconsistent(eqs):
        try:
            EquationSystem(eqs, canonical)
        except ContradictionError:
            return True
        return False

    core = list(equations)
    i = 0
    while i < len(core):
        trial = core[:i] + core[i + 1:]
        if inconsistent(trial):
            core = trial
        else:
            i += 1
    return core


def entails_equal(store: ConditionStore, lhs, rhs) -> bool:
    if store.has_equation(Equation(lhs, rhs)):
        return True
    try:
        value, _ = system_for(store).value(Op("Sub", (lhs, rhs)))
    except (UnresolvedError, DomainError):
        return False
    return value.is_zero()


__all__ = ["EquationSystem", "check_consistency", "entails_equal", "minimal_conflict",
           "solve_equations", "system_for"]
