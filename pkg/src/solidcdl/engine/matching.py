"""Theorem premise matching and application against a condition store."""

from __future__ import annotations

from ..cdl import Atom, Equation, Not, render_fact
from ..knowledge import SET_LIKE, TheoremDef, substitute, validity_check
from .algebra import check_consistency, entails_equal
from .store import THEOREM, ConditionStore, Provenance


class TheoremApplicationError(RuntimeError):
    """A theorem produced a conclusion that fails its own validity checks."""


def _bind_letters(pattern: str, actual: str, binding: dict, used: set):
    """Extend ``binding`` so the letters of ``pattern`` map onto ``actual``."""
    if len(pattern) != len(actual):
        return None
    b = dict(binding)
    u = set(used)
    for var, pt in zip(pattern, actual):
        if var in b:
            if b[var] != pt:
                return None
        else:
            if pt in u:
                return None
            b[var] = pt
            u.add(pt)
    return b, u


def _assign_from(vars_: str, pool: list[str], binding: dict, used: set):
    """All injective assignments of ``vars_`` into ``pool`` extending ``binding``."""
    if not vars_:
        yield binding, used
        return
    v, rest = vars_[0], vars_[1:]
    if v in binding:
        if binding[v] in pool:
            yield from _assign_from(rest, pool, binding, used)
        return
    for p in pool:
        if p in used:
            continue
        b = dict(binding)
        b[v] = p
        yield from _assign_from(rest, pool, b, used | {p})


def _assign_ordered(vars_: str, pool: str, binding: dict, used: set, start: int = 0):
    """Assignments of ``vars_`` to a subsequence of ``pool`` (order kept)."""
    if not vars_:
        yield binding, used
        return
    v, rest = vars_[0], vars_[1:]
    for i in range(start, len(pool)):
        p = pool[i]
        if v in binding:
            if binding[v] == p:
                yield from _assign_ordered(rest, pool, binding, used, i + 1)
            continue
        if p in used:
            continue
        b = dict(binding)
        b[v] = p
        yield from _assign_ordered(rest, pool, b, used | {p}, i + 1)


def _match_set_like(atom: Atom, store: ConditionStore, binding: dict, used: set):
    name, groups = atom.name, atom.args
    if name in ("Cospherical", "Cocircular") or (name == "Coplanar" and len(groups) >= 2):
        table = {"Cospherical": store.spheres, "Cocircular": store.circles,
                 "Coplanar": store.planes}[name]
        head, rest = groups[0], "".join(groups[1:])
        if len(head) != 1:
            return
        if head in binding:
            heads = [binding[head]] if binding[head] in table else []
        else:
            heads = [h for h in sorted(table) if h not in used]
        for h in heads:
            b = dict(binding)
            u = set(used)
            if head not in b:
                b[head] = h
                u.add(h)
            yield from _assign_from(rest, sorted(table[h]), b, u)
        return
    pts = "".join(groups)
    if name == "Collinear":
        # order matters on a line: match subsequences read in either direction
        seen = set()
        for line in store.collinear:
            for pool in (line, line[::-1]):
                for b, u in _assign_ordered(pts, pool, binding, used):
                    key = tuple(b[v] for v in pts)
                    if key not in seen:
                        seen.add(key)
                        yield b, u
        return
    pools = list(store.coplanar) + ["".join(v) for _, v in sorted(store.planes.items())]
    for pool in pools:
        yield from _assign_from(pts, sorted(pool), binding, used)


def _match_atoms(atoms: tuple, store: ConditionStore, binding: dict, used: set):
    if not atoms:
        yield binding
        return
    first, rest = atoms[0], atoms[1:]
    if first.name in SET_LIKE:
        for b, u in _match_set_like(first, store, binding, used):
            yield from _match_atoms(rest, store, b, u)
        return
    pattern = "".join(first.args)
    sizes = [len(g) for g in first.args]
    for fact in store.atoms_named(first.name):
        if [len(g) for g in fact.args] != sizes:
            continue
        hit = _bind_letters(pattern, "".join(fact.args), binding, used)
        if hit is not None:
            yield from _match_atoms(rest, store, *hit)


def premise_holds(premise, store: ConditionStore) -> bool:
    """Whether a fully instantiated premise fact is satisfied by ``store``."""
    if isinstance(premise, Not):
        return not store.holds(premise.atom)
    if isinstance(premise, Equation):
        return entails_equal(store, premise.lhs, premise.rhs)
    return store.holds(premise)


def match_premise(theorem: TheoremDef, store: ConditionStore) -> list[dict]:
    """Every substitution under which the theorem's premise holds.

    Positive atoms are matched against the store, equalities must be entailed
    by the equations, and negated atoms hold when the atom is absent.
    """
    out = []
    seen = set()
    for binding in _match_atoms(theorem.positive, store, {}, set()):
        key = tuple(sorted(binding.items()))
        if key in seen:
            continue
        seen.add(key)
        if all(premise_holds(substitute(p, binding), store)
               for p in theorem.equalities + theorem.negated):
            out.append(binding)
    return out


def instantiate(theorem: TheoremDef, binding: dict, store: ConditionStore):
    premises = tuple(store.kb.normalize(substitute(p, binding)) for p in theorem.premise)
    conclusions = tuple(store.kb.normalize(substitute(c, binding)) for c in theorem.conclusion)
    return premises, conclusions


def would_add(theorem: TheoremDef, binding: dict, store: ConditionStore) -> bool:
    _, conclusions = instantiate(theorem, binding, store)
    return any(not store.contains(c) for c in conclusions)


def apply_theorem(theorem: TheoremDef, binding: dict, store: ConditionStore,
                  new_facts: list | None = None) -> int:
    """Insert the instantiated conclusions with provenance; return how many
    facts (including extend consequences) were new.

    Raises :class:`TheoremApplicationError` when a conclusion fails its
    validity checks, and ``ContradictionError`` when the new equations make
    the store inconsistent.
    """
    premises, conclusions = instantiate(theorem, binding, store)
    prov = Provenance(THEOREM, theorem.name, premises)
    added = []
    for c in conclusions:
        added += store.add(c, prov)
    for f in added:
        unmet = validity_check(f, store.kb, store)
        if unmet:
            raise TheoremApplicationError(
                f"{theorem.name} concluded {render_fact(f)} but its checks fail: "
                + ", ".join(render_fact(u) for u in unmet))
    if new_facts is not None:
        new_facts.extend(added)
    if any(isinstance(f, Equation) for f in added):
        check_consistency(store)
    return len(added)
