"""Predicate library and theorem bank (GDL): loading, validation, expansion.

GDL documents are line oriented.  Entries start with ``predicate:`` or
``theorem:`` and continue with ``key: value`` lines; list values are joined
with ``&`` and keys may repeat.  ``#`` starts a comment::

    predicate: IsMidpointOfLine(M,AB)
    kind: Relation
    check: Point(M) & Line(AB) & Collinear(AMB)
    multi: M,BA
    extend: Equal(LengthOfLine(AM),LengthOfLine(MB))

    theorem: transitivity_between_plane_and_plane
    premise: ParallelBetweenPlane(U,V) & ParallelBetweenPlane(V,W)
    conclusion: ParallelBetweenPlane(U,W)

The same fields are accepted as JSON (``{"predicates": [...]}`` /
``{"theorems": [...]}``).
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

from .cdl import (Atom, Attr, CDLSyntaxError, Equation, Not, ValueGoal, attr_terms,
                  fact_points, map_expr, parse_fact, render_fact)

log = logging.getLogger(__name__)

KINDS = ("Construction", "BasicEntity", "Entity", "Relation", "Attribution")
EXTEND_DEPTH_CAP = 8
SET_LIKE = ("Collinear", "Coplanar", "Cospherical", "Cocircular")


class GDLError(ValueError):
    """A predicate or theorem document failed to load."""


class UnknownPredicateError(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown predicate {name!r}")

    def __str__(self):
        return self.args[0]


class ArityError(ValueError):
    pass


@dataclass(frozen=True)
class PredicateDef:
    name: str
    kind: str
    params: tuple[str, ...] = ()
    check: tuple = ()
    multi: tuple[tuple[str, ...], ...] = ()
    extend: tuple = ()
    variadic: bool = False
    builtin: bool = False

    @property
    def variables(self) -> str:
        return "".join(self.params)

    @property
    def signature(self) -> str:
        return f"{self.name}({','.join(self.params) if self.params else '*'})"


@dataclass(frozen=True)
class TheoremDef:
    name: str
    premise: tuple
    conclusion: tuple

    @property
    def positive(self) -> tuple[Atom, ...]:
        return tuple(p for p in self.premise if isinstance(p, Atom))

    @property
    def equalities(self) -> tuple[Equation, ...]:
        return tuple(p for p in self.premise if isinstance(p, Equation))

    @property
    def negated(self) -> tuple[Not, ...]:
        return tuple(p for p in self.premise if isinstance(p, Not))

    @property
    def head(self) -> str | None:
        pos = self.positive
        return pos[0].name if pos else None


@dataclass
class LoadReport:
    predicates: dict[str, int] = field(default_factory=dict)
    builtins: dict[str, int] = field(default_factory=dict)
    theorems: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def total_predicates(self) -> int:
        return sum(self.predicates.values())

    def as_dict(self) -> dict:
        return {
            "predicates": dict(self.predicates),
            "total_predicates": self.total_predicates,
            "builtins": dict(self.builtins),
            "theorems": self.theorems,
            "warnings": list(self.warnings),
        }

    def render(self) -> str:
        lines = [f"predicates: {self.total_predicates}"]
        lines += [f"  {k}: {self.predicates.get(k, 0)}" for k in KINDS]
        lines.append(f"built-in predicates: {sum(self.builtins.values())}")
        lines.append(f"theorems: {self.theorems}")
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def _builtin(name, kind, params=(), multi=(), variadic=False):
    return PredicateDef(name, kind, tuple(params), multi=tuple(tuple(m) for m in multi),
                        variadic=variadic, builtin=True)


BUILTINS: dict[str, PredicateDef] = {p.name: p for p in (
    _builtin("Shape", "Construction", variadic=True),
    _builtin("Collinear", "Construction", variadic=True),
    _builtin("Coplanar", "Construction", variadic=True),
    _builtin("Cospherical", "Construction", variadic=True),
    _builtin("Cocircular", "Construction", variadic=True),
    _builtin("Point", "BasicEntity", ("A",)),
    _builtin("Line", "BasicEntity", ("AB",), multi=[("BA",)]),
    _builtin("Plane", "BasicEntity", ("U",)),
    _builtin("Sphere", "BasicEntity", ("O",)),
    _builtin("Circle", "BasicEntity", ("O",)),
)}


# --------------------------------------------------------------------------
# substitution helpers


def _map_groups(groups, mapping) -> tuple[str, ...]:
    return tuple("".join(mapping.get(ch, ch) for ch in g) for g in groups)


def substitute(fact, mapping: dict[str, str]):
    """Rename point letters in a fact (letters missing from ``mapping`` stay)."""
    def on_leaf(leaf):
        if isinstance(leaf, Attr):
            return Attr(leaf.name, _map_groups(leaf.args, mapping))
        return leaf

    if isinstance(fact, Atom):
        return Atom(fact.name, _map_groups(fact.args, mapping))
    if isinstance(fact, Not):
        return Not(substitute(fact.atom, mapping))
    if isinstance(fact, Equation):
        return Equation(map_expr(fact.lhs, on_leaf), map_expr(fact.rhs, on_leaf))
    if isinstance(fact, ValueGoal):
        return ValueGoal(map_expr(fact.expr, on_leaf))
    raise TypeError(f"not a fact: {fact!r}")


def letters(fact) -> list[str]:
    """Point-variable letters of a (pattern) fact in order of appearance."""
    return fact_points(fact)


def _regroup(points: str, sizes) -> tuple[str, ...]:
    out, i = [], 0
    for n in sizes:
        out.append(points[i:i + n])
        i += n
    return tuple(out)


# --------------------------------------------------------------------------
# the knowledge base


class KnowledgeBase:
    """Immutable, cross-referenced predicate library and theorem bank."""

    def __init__(self, predicates: dict[str, PredicateDef], theorems: dict[str, TheoremDef],
                 report: LoadReport):
        self._predicates = dict(predicates)
        self._theorems = dict(theorems)
        self.report = report
        by_head: dict[str, list[str]] = {}
        for t in self._theorems.values():
            by_head.setdefault(t.head or "", []).append(t.name)
        self._by_head = {k: tuple(v) for k, v in by_head.items()}
        self._term_cache: dict = {}

    # -- lookup

    @property
    def predicates(self) -> dict[str, PredicateDef]:
        return dict(self._predicates)

    @property
    def theorems(self) -> dict[str, TheoremDef]:
        return dict(self._theorems)

    def theorem_list(self) -> list[TheoremDef]:
        return list(self._theorems.values())

    def theorems_by_head(self, name: str) -> tuple[str, ...]:
        return self._by_head.get(name, ())

    def has_predicate(self, name: str) -> bool:
        return name in self._predicates

    def predicate(self, name: str) -> PredicateDef:
        try:
            return self._predicates[name]
        except KeyError:
            raise UnknownPredicateError(name) from None

    def theorem(self, name: str) -> TheoremDef:
        try:
            return self._theorems[name]
        except KeyError:
            raise KeyError(f"unknown theorem {name!r}") from None

    def predicate_names(self) -> list[str]:
        return list(self._predicates)

    def without_theorem(self, name: str) -> KnowledgeBase:
        theorems = {k: v for k, v in self._theorems.items() if k != name}
        report = LoadReport(dict(self.report.predicates), dict(self.report.builtins),
                            len(theorems), list(self.report.warnings))
        return KnowledgeBase(self._predicates, theorems, report)

    # -- canonical forms

    def regroup(self, name: str, groups) -> tuple[str, ...]:
        """Split point groups to match the predicate's parameter pattern."""
        pred = self.predicate(name)
        groups = tuple(groups)
        if pred.variadic:
            return groups
        sizes = [len(g) for g in pred.params]
        pts = "".join(groups)
        if len(pts) != sum(sizes):
            raise ArityError(f"{name} expects {pred.signature}, got ({','.join(groups)})")
        return _regroup(pts, sizes)

    def _variants(self, pred: PredicateDef, args: tuple[str, ...]) -> list[tuple[str, ...]]:
        mapping = dict(zip(pred.variables, "".join(args)))
        return [_map_groups(m, mapping) for m in pred.multi]

    def canonical_term(self, term: Attr) -> Attr:
        """Representative of an attribute term among its multi orderings."""
        hit = self._term_cache.get(term)
        if hit is not None:
            return hit
        pred = self.predicate(term.name)
        args = self.regroup(term.name, term.args)
        options = [args] + self._variants(pred, args)
        best = min(options, key=lambda a: ",".join(a))
        out = Attr(term.name, best)
        self._term_cache[term] = out
        return out

    def normalize(self, fact):
        """Regroup arguments and canonicalize attribute terms."""
        def on_leaf(leaf):
            return self.canonical_term(leaf) if isinstance(leaf, Attr) else leaf

        if isinstance(fact, Atom):
            return Atom(fact.name, self.regroup(fact.name, fact.args))
        if isinstance(fact, Not):
            return Not(self.normalize(fact.atom))
        if isinstance(fact, Equation):
            return Equation(map_expr(fact.lhs, on_leaf), map_expr(fact.rhs, on_leaf))
        if isinstance(fact, ValueGoal):
            return ValueGoal(map_expr(fact.expr, on_leaf))
        raise TypeError(f"not a fact: {fact!r}")

    def checks_for(self, fact) -> list[Atom]:
        """Instantiated check atoms of a fact (attribute checks for equations)."""
        out: dict = {}
        if isinstance(fact, Not):
            fact = fact.atom
        if isinstance(fact, Atom):
            pred = self.predicate(fact.name)
            if pred.variadic:
                return []
            args = self.regroup(fact.name, fact.args)
            mapping = dict(zip(pred.variables, "".join(args)))
            for c in pred.check:
                out.setdefault(self.normalize(substitute(c, mapping)), None)
            return list(out)
        exprs = [fact.lhs, fact.rhs] if isinstance(fact, Equation) else [fact.expr]
        for e in exprs:
            for term in attr_terms(e):
                if isinstance(term, Attr):
                    for c in self.checks_for(Atom(term.name, term.args)):
                        out.setdefault(c, None)
        return list(out)


# --------------------------------------------------------------------------
# check / multi / extend


def validity_check(fact, kb: KnowledgeBase, store) -> list[Atom]:
    """Unmet check atoms of ``fact``; an empty list means the fact is valid.

    ``store`` only needs a ``holds(atom) -> bool`` method.  Raises
    :class:`UnknownPredicateError` for undeclared predicates or attributes.
    """
    if isinstance(fact, Atom):
        kb.predicate(fact.name)
    return [c for c in kb.checks_for(fact) if not store.holds(c)]


def _builtin_extend(atom: Atom) -> list[Atom]:
    name, groups = atom.name, atom.args
    out: list[Atom] = []

    def points(s):
        out.extend(Atom("Point", (p,)) for p in s)

    def lines(pairs):
        for a, b in pairs:
            out.append(Atom("Line", (a + b,)))
            out.append(Atom("Line", (b + a,)))

    if name == "Shape":
        for g in groups:
            points(g)
            if len(g) == 2:
                lines([(g[0], g[1])])
            elif len(g) > 2:
                lines([(g[i], g[(i + 1) % len(g)]) for i in range(len(g))])
    elif name == "Collinear":
        pts = "".join(groups)
        points(pts)
        lines(combinations(pts, 2))
    elif name == "Coplanar":
        if len(groups) >= 2:
            out.append(Atom("Plane", (groups[0],)))
            points("".join(groups[1:]))
        else:
            points("".join(groups))
    elif name in ("Cospherical", "Cocircular"):
        if groups:
            centre = groups[0]
            out.append(Atom("Sphere" if name == "Cospherical" else "Circle", (centre,)))
            points(centre)
            points("".join(groups[1:]))
    return out


def _direct_expansion(fact, kb: KnowledgeBase) -> list:
    if not isinstance(fact, Atom):
        return []
    pred = kb.predicate(fact.name)
    if pred.variadic:
        return _builtin_extend(fact)
    args = kb.regroup(fact.name, fact.args)
    out = [Atom(fact.name, v) for v in kb._variants(pred, args)]
    mapping = dict(zip(pred.variables, "".join(args)))
    out += [kb.normalize(substitute(e, mapping)) for e in pred.extend]
    return out


def expand_fact(fact, kb: KnowledgeBase, diagnostics: list | None = None) -> dict:
    """``fact`` plus its multi orderings and extend consequences, closed.

    Returns an insertion-ordered dict mapping each fact to the fact it was
    expanded from (``None`` for the input itself).
    """
    fact = kb.normalize(fact)
    out: dict = {fact: None}
    frontier = [fact]
    depth = 0
    while frontier:
        if depth >= EXTEND_DEPTH_CAP:
            msg = f"extend closure of {render_fact(fact)} hit depth cap {EXTEND_DEPTH_CAP}"
            log.warning(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            break
        nxt = []
        for f in frontier:
            for g in _direct_expansion(f, kb):
                if g not in out:
                    out[g] = f
                    nxt.append(g)
        frontier = nxt
        depth += 1
    return out


# --------------------------------------------------------------------------
# loading

_SIGNATURE = re.compile(r"^([A-Z][A-Za-z0-9]*)\(([A-Z,]*)\)$")
_ENTRY_KEYS = {"predicate", "theorem"}
_PRED_FIELDS = {"kind", "check", "multi", "extend"}
_THM_FIELDS = {"premise", "conclusion"}


def _split_list(value: str) -> list[str]:
    return [p.strip() for p in value.split("&") if p.strip()]


def _parse_text_entries(text: str, origin: str) -> list[dict]:
    entries: list[dict] = []
    current: dict | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise GDLError(f"{origin}:{lineno}: expected 'key: value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split(":", 1))
        key = key.lower()
        if key in _ENTRY_KEYS:
            current = {"type": key, "name": value, "line": lineno}
            entries.append(current)
            continue
        if current is None:
            raise GDLError(f"{origin}:{lineno}: {key!r} outside any entry")
        allowed = _PRED_FIELDS if current["type"] == "predicate" else _THM_FIELDS
        if key not in allowed:
            raise GDLError(f"{origin}:{lineno}: unknown field {key!r} for {current['type']}")
        if key == "kind":
            current["kind"] = value
        else:
            current.setdefault(key, []).extend(_split_list(value))
    return entries


def _parse_json_entries(text: str, origin: str) -> list[dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GDLError(f"{origin}: invalid JSON: {exc}") from None
    entries = []
    if isinstance(doc, list):
        items = [("predicate" if "kind" in d else "theorem", d) for d in doc]
    else:
        items = [("predicate", d) for d in doc.get("predicates", [])]
        items += [("theorem", d) for d in doc.get("theorems", [])]
    for i, (kind, d) in enumerate(items):
        entry = {"type": kind, "name": d.get("name", ""), "line": i + 1}
        for key in ("kind", "check", "multi", "extend", "premise", "conclusion"):
            if key in d:
                v = d[key]
                if key == "kind":
                    entry[key] = v
                else:
                    parts = [v] if isinstance(v, str) else list(v)
                    entry[key] = [p for item in parts for p in _split_list(str(item))]
        entries.append(entry)
    return entries


def _read_source(source) -> tuple[str, str]:
    if isinstance(source, (os.PathLike, Path)):
        return Path(source).read_text(encoding="utf-8"), str(source)
    if isinstance(source, str) and "\n" not in source and source.endswith((".gdl", ".json", ".txt")):
        return Path(source).read_text(encoding="utf-8"), source
    return source or "", "<string>"


def parse_entries(source) -> list[dict]:
    text, origin = _read_source(source)
    stripped = text.lstrip()
    if stripped.startswith(("{", "[")):
        return _parse_json_entries(text, origin)
    return _parse_text_entries(text, origin)


def _parse_pattern_fact(text: str, where: str):
    try:
        return parse_fact(text)
    except CDLSyntaxError as exc:
        raise GDLError(f"{where}: {exc}") from None


def _referenced(fact) -> list[tuple[str, str]]:
    """(kind-of-use, name) pairs a pattern fact refers to."""
    if isinstance(fact, Not):
        fact = fact.atom
    if isinstance(fact, Atom):
        return [("predicate", fact.name)]
    exprs = [fact.lhs, fact.rhs] if isinstance(fact, Equation) else [fact.expr]
    out = []
    for e in exprs:
        out += [("attribute", t.name) for t in attr_terms(e) if isinstance(t, Attr)]
    return out


def load_knowledge_base(predicate_source, theorem_source) -> KnowledgeBase:
    """Load and cross-reference the predicate and theorem documents.

    Sources may be paths or document text (GDL or JSON).  Raises
    :class:`GDLError` on syntax errors, duplicate names, references to
    undefined predicates and conclusion variables not bound by the premise.
    """
    report = LoadReport()
    pred_entries = parse_entries(predicate_source)
    thm_entries = parse_entries(theorem_source)
    if any(e["type"] != "predicate" for e in pred_entries):
        raise GDLError("theorem entry found in the predicate document")
    if any(e["type"] != "theorem" for e in thm_entries):
        raise GDLError("predicate entry found in the theorem document")

    predicates: dict[str, PredicateDef] = dict(BUILTINS)
    for p in BUILTINS.values():
        report.builtins[p.kind] = report.builtins.get(p.kind, 0) + 1
    if not pred_entries:
        report.warnings.append("predicate document defines no predicates")
    if not thm_entries:
        report.warnings.append("theorem document defines no theorems")

    raw_preds = []
    for e in pred_entries:
        where = f"predicate {e['name']!r} (entry line {e['line']})"
        m = _SIGNATURE.match(e["name"].replace(" ", ""))
        if not m:
            raise GDLError(f"{where}: malformed signature")
        name, params = m.group(1), tuple(g for g in m.group(2).split(",") if g)
        if name in predicates or name in ("Equal", "Value", "Add", "Sub", "Mul", "Div"):
            raise GDLError(f"{where}: duplicate predicate name {name!r}")
        kind = e.get("kind", "")
        if kind not in KINDS or kind in ("Construction", "BasicEntity"):
            raise GDLError(f"{where}: kind must be one of Entity, Relation, Attribution, got {kind!r}")
        variables = "".join(params)
        if len(set(variables)) != len(variables):
            raise GDLError(f"{where}: repeated parameter variable")
        multi = []
        for m_text in e.get("multi", []):
            groups = tuple(g for g in m_text.replace(" ", "").split(",") if g)
            if sorted("".join(groups)) != sorted(variables) or [len(g) for g in groups] != [len(g) for g in params]:
                raise GDLError(f"{where}: multi {m_text!r} is not a reordering of {e['name']}")
            multi.append(groups)
        check = tuple(_parse_pattern_fact(c, where) for c in e.get("check", []))
        extend = tuple(_parse_pattern_fact(c, where) for c in e.get("extend", []))
        for f in check + extend:
            if isinstance(f, (Not, ValueGoal)):
                raise GDLError(f"{where}: {render_fact(f)} not allowed in check/extend")
            stray = set(letters(f)) - set(variables)
            if stray:
                raise GDLError(f"{where}: {render_fact(f)} uses undeclared variables {''.join(sorted(stray))}")
        predicates[name] = PredicateDef(name, kind, params, check, tuple(multi), extend)
        raw_preds.append(name)
        report.predicates[kind] = report.predicates.get(kind, 0) + 1

    for k in KINDS:
        report.predicates.setdefault(k, 0)
    report.predicates["Construction"] += report.builtins.get("Construction", 0)
    report.predicates["BasicEntity"] += report.builtins.get("BasicEntity", 0)

    def verify_refs(f, where):
        for use, name in _referenced(f):
            pred = predicates.get(name)
            if pred is None:
                raise GDLError(f"{where}: undefined {use} {name!r} in {render_fact(f)}")
            if use == "attribute" and pred.kind != "Attribution":
                raise GDLError(f"{where}: {name!r} used as an attribute but is a {pred.kind}")
            if use == "predicate" and pred.kind == "Attribution":
                raise GDLError(f"{where}: attribute {name!r} used as a predicate")

    for name in raw_preds:
        p = predicates[name]
        for f in p.check + p.extend:
            verify_refs(f, f"predicate {name!r}")

    partial = KnowledgeBase(predicates, {}, report)

    def normalize_pattern(f, where):
        try:
            return partial.normalize(f)
        except ArityError as exc:
            raise GDLError(f"{where}: {exc}") from None

    for name in raw_preds:
        p = predicates[name]
        where = f"predicate {name!r}"
        predicates[name] = PredicateDef(
            p.name, p.kind, p.params,
            tuple(normalize_pattern(f, where) for f in p.check), p.multi,
            tuple(normalize_pattern(f, where) for f in p.extend))
    partial = KnowledgeBase(predicates, {}, report)

    theorems: dict[str, TheoremDef] = {}
    for e in thm_entries:
        name = e["name"]
        where = f"theorem {name!r} (entry line {e['line']})"
        if not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", name):
            raise GDLError(f"{where}: malformed theorem name")
        if name in theorems:
            raise GDLError(f"{where}: duplicate theorem name")
        premise = tuple(_parse_pattern_fact(c, where) for c in e.get("premise", []))
        conclusion = tuple(_parse_pattern_fact(c, where) for c in e.get("conclusion", []))
        if not premise or not conclusion:
            raise GDLError(f"{where}: needs both premise and conclusion")
        for f in premise + conclusion:
            verify_refs(f, where)
            if isinstance(f, ValueGoal):
                raise GDLError(f"{where}: Value(...) cannot appear in a theorem")
        if any(isinstance(f, Not) for f in conclusion):
            raise GDLError(f"{where}: negated atoms may only appear in the premise")
        premise = tuple(normalize_pattern(f, where) for f in premise)
        conclusion = tuple(normalize_pattern(f, where) for f in conclusion)
        bound = {ch for f in premise if isinstance(f, Atom) for ch in letters(f)}
        for f in premise:
            if not isinstance(f, Atom):
                stray = set(letters(f)) - bound
                if stray:
                    raise GDLError(f"{where}: premise {render_fact(f)} uses variables "
                                   f"{''.join(sorted(stray))} not bound by a positive atom")
        for f in conclusion:
            stray = set(letters(f)) - bound
            if stray:
                raise GDLError(f"{where}: conclusion {render_fact(f)} uses unbound variables "
                               f"{''.join(sorted(stray))}")
        theorems[name] = TheoremDef(name, premise, conclusion)
    report.theorems = len(theorems)
    return KnowledgeBase(predicates, theorems, report)


def default_gdl_paths() -> tuple[Path, Path]:
    data = Path(__file__).parent / "data"
    return data / "predicates.gdl", data / "theorems.gdl"


def load_default_kb() -> KnowledgeBase:
    return load_knowledge_base(*default_gdl_paths())

