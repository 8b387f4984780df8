"""CDL facts and algebraic expressions: grammar, canonical rendering, evaluation.

Point arguments are kept as groups of uppercase letters (``"AB"``); how a
group is split is decided by the knowledge base, which knows each
predicate's parameter pattern.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

from .exact import Exact, ExactnessError

OPERATORS = ("Value", "Add", "Sub", "Mul", "Div")
NAMED_CONSTANTS = ("pi",)


class CDLSyntaxError(ValueError):
    def __init__(self, message: str, text: str = "", pos: int = 0):
        self.text = text
        self.pos = pos
        where = f" at position {pos}" if text else ""
        super().__init__(f"{message}{where}" + (f": {text!r}" if text else ""))


class UnknownOperatorError(CDLSyntaxError):
    pass


class UnresolvedError(LookupError):
    """Evaluation hit terms with no bound value."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        super().__init__("unresolved terms: " + ", ".join(render_expr(t) for t in self.terms))


class DomainError(ArithmeticError):
    pass


# --------------------------------------------------------------------------
# expression nodes


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Attr:
    """Attribute term such as ``LengthOfLine(AB)``."""

    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Op:
    op: str
    args: tuple


Expression = Union[Num, Const, Attr, Var, Op]


def _order_key(e) -> tuple:
    if isinstance(e, Num):
        return (0, e.value, "")
    if isinstance(e, Const):
        return (1, 0, e.name)
    return (2, 0, render_expr(e))


def make_op(op: str, args) -> Op:
    """Build an operator node; Add and Mul are flattened and sorted."""
    if op not in OPERATORS:
        raise UnknownOperatorError(f"unknown operator {op!r}")
    args = tuple(args)
    if op in ("Add", "Mul"):
        flat = []
        for a in args:
            if isinstance(a, Op) and a.op == op:
                flat.extend(a.args)
            else:
                flat.append(a)
        if len(flat) < 2:
            raise CDLSyntaxError(f"{op} needs at least two operands")
        args = tuple(sorted(flat, key=_order_key))
    elif op in ("Sub", "Div"):
        if len(args) != 2:
            raise CDLSyntaxError(f"{op} is binary, got {len(args)} operands")
    elif len(args) != 1:
        raise CDLSyntaxError("Value takes exactly one operand")
    for a in args:
        if isinstance(a, Op) and a.op == "Value":
            raise CDLSyntaxError("Value may only wrap a whole goal, not appear inside an expression")
    return Op(op, args)


def attr_terms(e) -> list[Attr]:
    """Attribute terms of an expression, first-occurrence order, no repeats."""
    out: dict = {}

    def walk(x):
        if isinstance(x, (Attr, Var)):
            out.setdefault(x, None)
        elif isinstance(x, Op):
            for a in x.args:
                walk(a)

    walk(e)
    return list(out)


def map_expr(e, fn):
    """Rebuild ``e`` with ``fn`` applied to every Attr/Var leaf."""
    if isinstance(e, (Attr, Var)):
        return fn(e)
    if isinstance(e, Op):
        return make_op(e.op, [map_expr(a, fn) for a in e.args])
    return e


# --------------------------------------------------------------------------
# facts


@dataclass(frozen=True)
class Atom:
    name: str
    args: tuple[str, ...]

    @property
    def points(self) -> str:
        return "".join(self.args)


@dataclass(frozen=True)
class Equation:
    lhs: Expression
    rhs: Expression


@dataclass(frozen=True)
class Not:
    atom: Atom


@dataclass(frozen=True)
class ValueGoal:
    """``Value(expr)``: the quantity a problem asks for."""

    expr: Expression


Fact = Union[Atom, Equation, Not, ValueGoal]


def fact_points(f) -> list[str]:
    """Every point letter mentioned by a fact, in order of appearance."""
    seen: dict = {}

    def add_groups(groups):
        for g in groups:
            for ch in g:
                seen.setdefault(ch, None)

    def walk(e):
        if isinstance(e, Attr):
            add_groups(e.args)
        elif isinstance(e, Op):
            for a in e.args:
                walk(a)

    if isinstance(f, Atom):
        add_groups(f.args)
    elif isinstance(f, Not):
        add_groups(f.atom.args)
    elif isinstance(f, Equation):
        walk(f.lhs)
        walk(f.rhs)
    elif isinstance(f, ValueGoal):
        walk(f.expr)
    return list(seen)


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>-?\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),~])
""", re.VERBOSE)

_GROUP = re.compile(r"[A-Z]+\Z")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise CDLSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def parse_number(s: str) -> Fraction:
    if "/" in s:
        num, den = s.split("/")
        if int(den) == 0:
            raise DomainError(f"zero denominator in literal {s!r}")
        return Fraction(Fraction(num), int(den))
    return Fraction(s)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.next()
        if val != value:
            raise CDLSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", self.text, pos)

    def error(self, message: str):
        raise CDLSyntaxError(message, self.text, self.peek()[2])

    # --

    def fact(self):
        kind, val, pos = self.peek()
        if val == "~":
            self.next()
            inner = self.fact()
            if not isinstance(inner, Atom):
                raise CDLSyntaxError("only predicate atoms can be negated", self.text, pos)
            return Not(inner)
        if kind != "name" or not val[0].isupper():
            self.error("expected a predicate name")
        self.next()
        if val == "Equal":
            self.expect("(")
            lhs = self.expr()
            self.expect(",")
            rhs = self.expr()
            self.expect(")")
            return Equation(lhs, rhs)
        if val == "Value":
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return ValueGoal(e)
        if val in OPERATORS:
            raise CDLSyntaxError(f"operator {val} cannot stand alone as a fact", self.text, pos)
        return Atom(val, self.groups(val, pos))

    def groups(self, name: str, pos: int) -> tuple[str, ...]:
        self.expect("(")
        out = []
        if self.peek()[1] == ")":
            self.next()
            return ()
        while True:
            kind, val, p = self.next()
            if kind != "name" or not _GROUP.match(val):
                raise CDLSyntaxError(f"{name}: argument {val!r} is not a point group", self.text, p)
            out.append(val)
            kind, val, p = self.next()
            if val == ")":
                return tuple(out)
            if val != ",":
                raise CDLSyntaxError(f"expected ',' or ')', found {val!r}", self.text, p)

    def expr(self):
        kind, val, pos = self.next()
        if kind == "num":
            return Num(parse_number(val))
        if kind != "name":
            raise CDLSyntaxError(f"expected an expression, found {val or 'end of input'!r}", self.text, pos)
        if val in NAMED_CONSTANTS:
            return Const(val)
        if self.peek()[1] != "(":
            if val[0].islower():
                return Var(val)
            raise CDLSyntaxError(f"bare name {val!r} is not an expression", self.text, pos)
        if val in OPERATORS:
            if val == "Value":
                raise CDLSyntaxError("Value may not be nested inside an expression", self.text, pos)
            self.expect("(")
            args = [self.expr()]
            while self.peek()[1] == ",":
                self.next()
                args.append(self.expr())
            self.expect(")")
            try:
                return make_op(val, args)
            except CDLSyntaxError as exc:
                raise CDLSyntaxError(str(exc), self.text, pos) from None
        # attribute term, or an operator we do not know
        save = self.i
        try:
            return Attr(val, self.groups(val, pos))
        except CDLSyntaxError:
            self.i = save
            raise UnknownOperatorError(f"unknown operator {val!r}", self.text, pos) from None


def parse_fact(text: str):
    """Parse one CDL fact; whitespace anywhere is ignored."""
    if not text or not text.strip():
        raise CDLSyntaxError("empty fact")
    p = _Parser(text)
    f = p.fact()
    kind, val, pos = p.peek()
    if kind != "end":
        raise CDLSyntaxError(f"trailing input {val!r}", text, pos)
    return f


def parse_expr(text: str):
    """Parse a bare CDL expression such as ``Mul(4/3,pi,RadiusOfSphere(O))``."""
    if not text or not text.strip():
        raise CDLSyntaxError("empty expression")
    p = _Parser(text)
    e = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise CDLSyntaxError(f"trailing input {val!r}", text, pos)
    return e


# --------------------------------------------------------------------------
# rendering


def _render_num(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def render_expr(e) -> str:
    if isinstance(e, Num):
        return _render_num(e.value)
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Attr):
        return f"{e.name}({','.join(e.args)})"
    if isinstance(e, Op):
        return f"{e.op}({','.join(render_expr(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def render_fact(f) -> str:
    if isinstance(f, Atom):
        return f"{f.name}({','.join(f.args)})"
    if isinstance(f, Not):
        return "~" + render_fact(f.atom)
    if isinstance(f, Equation):
        return f"Equal({render_expr(f.lhs)},{render_expr(f.rhs)})"
    if isinstance(f, ValueGoal):
        return f"Value({render_expr(f.expr)})"
    raise TypeError(f"not a fact: {f!r}")


# --------------------------------------------------------------------------
# evaluation


def evaluate(e, bindings: Mapping | None = None) -> Exact:
    """Exact value of ``e``.

    ``bindings`` maps Attr/Var nodes to values (Exact, int or Fraction).
    Raises :class:`UnresolvedError` naming every unbound term, and
    :class:`DomainError` on division by zero.
    """
    bindings = bindings or {}
    missing = [t for t in attr_terms(e) if t not in bindings]
    if missing:
        raise UnresolvedError(missing)
    return _eval(e, bindings)


def _eval(e, bindings) -> Exact:
    if isinstance(e, Num):
        return Exact.rational(e.value)
    if isinstance(e, Const):
        return Exact.pi()
    if isinstance(e, (Attr, Var)):
        v = bindings[e]
        return v if isinstance(v, Exact) else Exact.rational(v)
    args = [_eval(a, bindings) for a in e.args]
    if e.op == "Value":
        return args[0]
    if e.op == "Add":
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    if e.op == "Mul":
        out = args[0]
        for a in args[1:]:
            out = out * a
        return out
    if e.op == "Sub":
        return args[0] - args[1]
    if args[1].is_zero():
        raise DomainError(f"division by zero in {render_expr(e)}")
    try:
        return args[0] / args[1]
    except ExactnessError as exc:
        raise DomainError(str(exc)) from None


# --------------------------------------------------------------------------
# free-form answers ("36*pi", "2*sqrt(3)", "10")

_ANSWER_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-zπ√]+)|(?P<op>\*\*|[-+*/^()]))")


class _AnswerParser:
    """Infix arithmetic over exact values, with pi, sqrt and implicit
    multiplication (``36pi``).  Evaluates while parsing."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _ANSWER_TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise CDLSyntaxError("unexpected character in answer", text, pos)
            kind = m.lastgroup
            val = m.group(kind)
            if kind == "name":
                for name in re.findall(r"pi|π|sqrt|√|[A-Za-z]+", val):
                    self.tokens.append(("name", name, m.start(kind)))
            else:
                self.tokens.append((kind, "^" if val == "**" else val, m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def fail(self, message: str, pos: int):
        raise CDLSyntaxError(message, self.text, pos)

    def parse(self) -> Exact:
        v = self.sum()
        kind, val, pos = self.peek()
        if kind != "end":
            self.fail(f"unexpected {val!r} in answer", pos)
        return v

    def sum(self) -> Exact:
        v = self.product()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.product()
            v = v + rhs if op == "+" else v - rhs
        return v

    def product(self) -> Exact:
        v = self.unary()
        while True:
            kind, val, pos = self.peek()
            if val in ("*", "/"):
                self.take()
                rhs = self.unary()
                if val == "*":
                    v = v * rhs
                elif rhs.is_zero():
                    raise DomainError("division by zero in answer")
                else:
                    v = v / rhs
            elif kind in ("num", "name") or val == "(":
                v = v * self.unary()
            else:
                return v

    def unary(self) -> Exact:
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
        return self.power()

    def power(self) -> Exact:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            kind, val, pos = self.take()
            if kind != "num" or "." in val:
                self.fail("only integer exponents are supported", pos)
            return base ** int(val)
        return base

    def atom(self) -> Exact:
        kind, val, pos = self.take()
        if kind == "num":
            return Exact.rational(Fraction(val))
        if val == "(":
            v = self.sum()
            if self.take()[1] != ")":
                self.fail("missing ')'", pos)
            return v
        if val in ("pi", "π"):
            return Exact.pi()
        if val in ("sqrt", "√"):
            return self.atom().root(2)
        self.fail(f"unexpected {val or 'end of input'!r} in answer", pos)


def parse_answer(text: str) -> Exact:
    """Parse a free-form answer to an exact value.

    Accepts plain numbers, CDL expressions (``Mul(36,pi)``) and infix forms
    such as ``36*pi``, ``12π`` or ``2*sqrt(3)``.
    """
    s = text.strip()
    if not s:
        raise CDLSyntaxError("empty answer")
    if re.match(r"^(Add|Sub|Mul|Div)\(", s):
        return evaluate(parse_expr(s))
    try:
        return _AnswerParser(s).parse()
    except ExactnessError as exc:
        raise CDLSyntaxError(f"answer has no exact value: {exc}", s) from None


def as_exact(x) -> Exact:
    if isinstance(x, Exact):
        return x
    if isinstance(x, str):
        return parse_answer(x)
    if isinstance(x, (int, Fraction)):
        return Exact.rational(x)
    if isinstance(x, float):
        return Exact.rational(Fraction(x))
    return evaluate(x)


def answers_equal(a, b, rel_tol: float = 1e-6) -> bool:
    """Compare two answers: exact canonical equality first, then magnitudes.

    Each side may be an Exact, a CDL expression node, a number or answer text.
    Raises :class:`UnresolvedError` if either side still has free terms.
    """
    va, vb = as_exact(a), as_exact(b)
    if va == vb:
        return True
    return math.isclose(float(va), float(vb), rel_tol=rel_tol, abs_tol=0.0)
