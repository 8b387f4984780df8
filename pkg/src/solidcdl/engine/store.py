"""Condition store: the set of known facts and equations of one search node."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..cdl import Atom, Equation, Not, ValueGoal, render_expr, render_fact
from ..knowledge import KnowledgeBase, expand_fact, validity_check

GIVEN = "given"
EXTEND = "extend"
THEOREM = "theorem"


@dataclass(frozen=True)
class Provenance:
    source: str
    theorem: str | None = None
    premises: tuple = ()

    def describe(self) -> str:
        if self.source == THEOREM:
            return f"{self.theorem}({', '.join(render_fact(p) for p in self.premises)})"
        if self.source == EXTEND:
            return f"extend of {render_fact(self.premises[0])}"
        return GIVEN


@dataclass
class Contradiction:
    """Inconsistent conditions; ``conflict`` is a jointly unsatisfiable set."""

    conflict: list
    explanation: str = ""
    sources: dict = field(default_factory=dict)   # rendered fact -> provenance text

    def render(self) -> str:
        lines = ["contradiction: " + (self.explanation or "conditions are inconsistent")]
        for f in self.conflict:
            text = render_fact(f)
            src = self.sources.get(text)
            lines.append(f"  {text}" + (f"  [{src}]" if src else ""))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"status": "contradiction", "explanation": self.explanation,
                "conflict": [render_fact(f) for f in self.conflict],
                "sources": dict(self.sources)}


class ContradictionError(Exception):
    def __init__(self, contradiction: Contradiction):
        self.contradiction = contradiction
        super().__init__(contradiction.render())


class InvalidProblemError(ValueError):
    """Given facts failed parsing or their validity checks."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid problem:\n  " + "\n  ".join(self.problems))


def equation_key(eq: Equation) -> tuple[str, str]:
    a, b = render_expr(eq.lhs), render_expr(eq.rhs)
    return (a, b) if a <= b else (b, a)


@dataclass
class ConditionStore:
    kb: KnowledgeBase
    atoms: dict = field(default_factory=dict)        # predicate name -> {Atom: None}
    equations: dict = field(default_factory=dict)    # equation_key -> Equation
    provenance: dict = field(default_factory=dict)   # fact -> Provenance
    planes: dict = field(default_factory=dict)       # plane -> {point: None}
    spheres: dict = field(default_factory=dict)
    circles: dict = field(default_factory=dict)
    collinear: list = field(default_factory=list)    # point strings
    coplanar: list = field(default_factory=list)     # unnamed coplanar point strings
    diagnostics: list = field(default_factory=list)

    def copy(self) -> ConditionStore:
        return ConditionStore(
            self.kb,
            {k: dict(v) for k, v in self.atoms.items()},
            dict(self.equations),
            dict(self.provenance),
            {k: dict(v) for k, v in self.planes.items()},
            {k: dict(v) for k, v in self.spheres.items()},
            {k: dict(v) for k, v in self.circles.items()},
            list(self.collinear),
            list(self.coplanar),
            list(self.diagnostics),
        )

    # -- queries

    def __len__(self) -> int:
        return sum(len(v) for v in self.atoms.values()) + len(self.equations)

    def facts(self) -> list:
        out = [a for group in self.atoms.values() for a in group]
        return out + list(self.equations.values())

    def atoms_named(self, name: str) -> list[Atom]:
        return list(self.atoms.get(name, ()))

    def equation_list(self) -> list[Equation]:
        return list(self.equations.values())

    def has_equation(self, eq: Equation) -> bool:
        return equation_key(eq) in self.equations

    def contains(self, fact) -> bool:
        """Literal membership (no built-in set semantics)."""
        if isinstance(fact, Atom):
            return fact in self.atoms.get(fact.name, ())
        if isinstance(fact, Equation):
            return self.has_equation(fact)
        return False

    def holds(self, atom) -> bool:
        """Whether ``atom`` is known, with set semantics for Coplanar,
        Collinear, Cospherical and Cocircular."""
        if isinstance(atom, Not):
            return not self.holds(atom.atom)
        name, groups = atom.name, atom.args
        if name == "Coplanar":
            if len(groups) >= 2:
                pts = "".join(groups[1:])
                return all(p in self.planes.get(groups[0], ()) for p in pts)
            pts = "".join(groups)
            return (any(all(p in s for p in pts) for s in self.coplanar)
                    or any(all(p in s for p in pts) for s in self.planes.values()))
        if name == "Collinear":
            pts = "".join(groups)
            return any(all(p in s for p in pts) for s in self.collinear)
        if name in ("Cospherical", "Cocircular"):
            table = self.spheres if name == "Cospherical" else self.circles
            if not groups or groups[0] not in table:
                return False
            return all(p in table[groups[0]] for p in "".join(groups[1:]))
        return atom in self.atoms.get(name, ())

    def points(self) -> list[str]:
        return [a.args[0] for a in self.atoms.get("Point", ())]

    # -- updates

    def _insert_atom(self, atom: Atom) -> None:
        self.atoms.setdefault(atom.name, {})[atom] = None
        g = atom.args
        if atom.name == "Coplanar":
            if len(g) >= 2:
                plane = self.planes.setdefault(g[0], {})
                for p in "".join(g[1:]):
                    plane.setdefault(p, None)
            else:
                self.coplanar.append("".join(g))
        elif atom.name == "Collinear":
            self.collinear.append("".join(g))
        elif atom.name in ("Cospherical", "Cocircular") and g:
            table = self.spheres if atom.name == "Cospherical" else self.circles
            centre = table.setdefault(g[0], {})
            for p in "".join(g[1:]):
                centre.setdefault(p, None)

    def add(self, fact, provenance: Provenance) -> list:
        """Insert ``fact`` and its extend closure; return the facts that were new."""
        if isinstance(fact, (Not, ValueGoal)):
            raise ValueError(f"{render_fact(fact)} cannot be stored as a condition")
        new = []
        if isinstance(fact, Equation):
            fact = self.kb.normalize(fact)
            key = equation_key(fact)
            if key not in self.equations:
                self.equations[key] = fact
                self.provenance[fact] = provenance
                new.append(fact)
            return new
        closure = expand_fact(fact, self.kb, self.diagnostics)
        for g, parent in closure.items():
            if self.contains(g):
                continue
            if isinstance(g, Equation):
                self.equations[equation_key(g)] = g
            else:
                self._insert_atom(g)
            self.provenance[g] = provenance if parent is None else Provenance(EXTEND, None, (parent,))
            new.append(g)
        return new

    def invalid_facts(self) -> list[tuple]:
        """(fact, unmet checks) for every stored fact whose checks fail."""
        bad = []
        for f in self.facts():
            unmet = validity_check(f, self.kb, self)
            if unmet:
                bad.append((f, unmet))
        return bad

    def provenance_chain_ok(self, fact) -> bool:
        """Whether the provenance of ``fact`` bottoms out in given facts."""
        seen = set()
        stack = [fact]
        while stack:
            f = stack.pop()
            if f in seen:
                continue
            seen.add(f)
            prov = self.provenance.get(f)
            if prov is None:
                if isinstance(f, Atom) and self.holds(f):
                    continue  # premise satisfied via set semantics of a stored fact
                if isinstance(f, (Not, Equation)):
                    continue
                return False
            if prov.source != GIVEN:
                stack.extend(p for p in prov.premises if not isinstance(p, Not))
        return True
