"""Tree search over theorem applications, solution traces and trace replay."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

from ..cdl import (Atom, CDLSyntaxError, DomainError, UnresolvedError, ValueGoal,
                   parse_answer, parse_fact, render_fact)
from ..exact import Exact
from ..knowledge import ArityError, KnowledgeBase, UnknownPredicateError, letters, substitute
from ..problem import ProblemCDL
from .algebra import check_consistency, minimal_conflict, solve_equations
from .matching import apply_theorem, instantiate, match_premise, premise_holds, would_add
from .store import (GIVEN, ConditionStore, Contradiction, ContradictionError,
                    InvalidProblemError, Provenance)

BFS = "bfs"
DFS = "dfs"

EXPANDABLE = "expandable"
EXPANDED = "expanded"
SOLVED = "solved"
UNSOLVED = "unsolved"

TIMEOUT = "timeout"
STEP_CAP = "step-cap"
EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float = 300.0
    step_cap: int = 10_000
    traversal: str = BFS

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time limit must be positive")
        if self.step_cap < 1:
            raise ValueError("step cap must be positive")
        if self.traversal not in (BFS, DFS):
            raise ValueError(f"traversal must be {BFS} or {DFS}")


@dataclass(frozen=True)
class TraceStep:
    theorem: str
    substitution: dict
    premises: tuple          # rendered facts
    conclusions: tuple       # rendered facts that were new

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "substitution": dict(self.substitution),
                "premises": list(self.premises), "conclusions": list(self.conclusions)}

    @classmethod
    def from_dict(cls, d: dict) -> TraceStep:
        return cls(d["theorem"], dict(d["substitution"]), tuple(d.get("premises", ())),
                   tuple(d.get("conclusions", ())))

    def render(self) -> str:
        sub = ",".join(f"{k}={v}" for k, v in sorted(self.substitution.items()))
        head = f"{self.theorem}[{sub}]"
        return (f"{head}\n    because " + " & ".join(self.premises)
                + "\n    gives " + " & ".join(self.conclusions))


@dataclass
class SolutionTrace:
    goal: str
    value: str
    steps: list = field(default_factory=list)
    step_count: int = 0      # productive applications over the whole search
    nodes: int = 0
    duration: float = 0.0

    @property
    def theorems(self) -> list[str]:
        return [s.theorem for s in self.steps]

    @property
    def exact_value(self) -> Exact | None:
        return None if self.value == "True" else parse_answer(self.value)

    def to_dict(self, timing: bool = True) -> dict:
        d = {"status": "solved", "goal": self.goal, "value": self.value,
             "steps": [s.to_dict() for s in self.steps],
             "step_count": self.step_count, "nodes": self.nodes}
        if timing:
            d["duration"] = round(self.duration, 6)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SolutionTrace:
        return cls(d["goal"], d["value"], [TraceStep.from_dict(s) for s in d.get("steps", ())],
                   d.get("step_count", 0), d.get("nodes", 0), d.get("duration", 0.0))

    def render_text(self) -> str:
        lines = [f"goal: {self.goal}"]
        if not self.steps:
            lines.append("  entailed by the given conditions")
        for i, s in enumerate(self.steps, 1):
            lines.append(f"  {i}. {s.render()}")
        lines.append(f"answer: {self.value}")
        lines.append(f"steps: {self.step_count}  nodes: {self.nodes}  time: {self.duration:.3f}s")
        return "\n".join(lines)


@dataclass
class Unsolved:
    reason: str
    step_count: int = 0
    nodes: int = 0
    duration: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = {"status": "unsolved", "reason": self.reason, "step_count": self.step_count,
             "nodes": self.nodes}
        if timing:
            d["duration"] = round(self.duration, 6)
        return d

    def render_text(self) -> str:
        return (f"unsolved ({self.reason}) after {self.step_count} steps, "
                f"{self.nodes} nodes, {self.duration:.3f}s")


@dataclass
class SearchNode:
    store: ConditionStore | None
    parent: SearchNode | None = None
    pending: tuple | None = None        # (index, TheoremDef, [bindings]) applied when popped
    steps: tuple = ()
    state: str = EXPANDABLE
    depth: int = 0
    offered: dict = field(default_factory=dict)   # theorem -> binding keys seen at expansion

    def mark(self, state: str) -> None:
        allowed = {EXPANDABLE: {SOLVED, EXPANDED, UNSOLVED}, EXPANDED: {UNSOLVED}}
        if state not in allowed.get(self.state, ()):
            raise RuntimeError(f"illegal node transition {self.state} -> {state}")
        self.state = state


# --------------------------------------------------------------------------


def _contradiction(store: ConditionStore, exc: ContradictionError) -> Contradiction:
    c = exc.contradiction
    core = minimal_conflict(c.conflict, store.kb.canonical_term) or c.conflict
    sources = {}
    for f in core:
        prov = store.provenance.get(f)
        sources[render_fact(f)] = prov.describe() if prov else GIVEN
    return Contradiction(core, c.explanation, sources)


def init_store(problem: ProblemCDL, kb: KnowledgeBase) -> ConditionStore:
    """Extend-closed store of the given facts.

    Raises :class:`InvalidProblemError` when a given fact names an unknown
    predicate or fails its checks, and :class:`ContradictionError` when the
    givens are inconsistent.
    """
    store = ConditionStore(kb)
    problems = []
    given = []
    for f in problem.given:
        try:
            g = kb.normalize(f)
            store.add(g, Provenance(GIVEN))
            given.append(g)
        except (UnknownPredicateError, ArityError, ValueError) as exc:
            problems.append(f"{render_fact(f)}: {exc}")
    for g in given:
        try:
            unmet = kb.checks_for(g)
        except (UnknownPredicateError, ArityError) as exc:
            problems.append(f"{render_fact(g)}: {exc}")
            continue
        missing = [c for c in unmet if not store.holds(c)]
        if missing:
            problems.append(f"{render_fact(g)} fails checks: "
                            + ", ".join(render_fact(c) for c in missing))
    if problem.goal is not None:
        try:
            goal = kb.normalize(problem.goal)
            for c in kb.checks_for(goal):
                if not store.holds(c):
                    problems.append(f"goal {render_fact(goal)} fails check {render_fact(c)}")
        except (UnknownPredicateError, ArityError) as exc:
            problems.append(f"goal {render_fact(problem.goal)}: {exc}")
    if problems:
        raise InvalidProblemError(problems)
    try:
        check_consistency(store)
    except ContradictionError as exc:
        raise ContradictionError(_contradiction(store, exc)) from None
    return store


def goal_value(store: ConditionStore, goal) -> str | None:
    """Rendered goal value if the store already settles the goal."""
    if isinstance(goal, ValueGoal):
        try:
            return str(solve_equations(store, goal.expr))
        except (UnresolvedError, DomainError):
            return None
    if isinstance(goal, Atom):
        return "True" if store.holds(goal) else None
    raise TypeError(f"unsupported goal {goal!r}")


def candidates(store: ConditionStore) -> list[tuple]:
    """(index, theorem, productive bindings) per theorem, in declaration order."""
    out = []
    for i, t in enumerate(store.kb.theorem_list()):
        bindings = [b for b in match_premise(t, store) if would_add(t, b, store)]
        if bindings:
            out.append((i, t, bindings))
    return out


def _key(binding: dict) -> tuple:
    return tuple(sorted(binding.items()))


def _children(node: SearchNode) -> list[SearchNode]:
    """Child per applicable theorem, skipping reorderings of commuting steps.

    Applications only add facts, so applying theorem j then i reaches the
    same store as i then j.  Below a node that applied theorem i, a theorem
    declared earlier is offered only with bindings that the node itself
    enabled; the other orderings are explored under the earlier sibling.
    """
    last = node.pending[0] if node.pending else -1
    inherited = node.parent.offered if node.parent else {}
    out = []
    for i, t, bindings in candidates(node.store):
        node.offered[t.name] = {_key(b) for b in bindings}
        if i < last:
            old = inherited.get(t.name, set())
            bindings = [b for b in bindings if _key(b) not in old]
            if not bindings:
                continue
        out.append(SearchNode(None, node, (i, t, bindings), node.steps, depth=node.depth + 1))
    return out


def _fingerprint(store: ConditionStore) -> frozenset:
    return frozenset(store.facts())


class _Budget:
    def __init__(self, limits: SolveLimits):
        self.limits = limits
        self.start = time.perf_counter()
        self.steps = 0

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def out_of_time(self) -> bool:
        return self.elapsed() > self.limits.time_limit


def search(problem: ProblemCDL, kb: KnowledgeBase, limits: SolveLimits | None = None):
    """Breadth- or depth-first search for a theorem sequence settling the goal.

    Returns a :class:`SolutionTrace`, an :class:`Unsolved` or a
    :class:`Contradiction`.  Invalid problems raise InvalidProblemError.
    """
    limits = limits or SolveLimits()
    budget = _Budget(limits)
    if problem.goal is None:
        raise InvalidProblemError(["problem has no goal"])
    try:
        root_store = init_store(problem, kb)
    except ContradictionError as exc:
        return exc.contradiction
    goal = kb.normalize(problem.goal)
    goal_text = render_fact(goal)

    frontier = deque([SearchNode(root_store)])
    seen = {_fingerprint(root_store)}
    nodes = 0

    def unsolved(reason):
        return Unsolved(reason, budget.steps, nodes, budget.elapsed())

    while frontier:
        if budget.out_of_time():
            return unsolved(TIMEOUT)
        node = frontier.popleft() if limits.traversal == BFS else frontier.pop()
        nodes += 1
        if node.pending is not None:
            store = node.parent.store.copy()
            _, theorem, bindings = node.pending
            steps = list(node.steps)
            try:
                for b in bindings:
                    if budget.out_of_time():
                        return unsolved(TIMEOUT)
                    premises, _ = instantiate(theorem, b, store)
                    new = []
                    if apply_theorem(theorem, b, store, new):
                        budget.steps += 1
                        steps.append(TraceStep(theorem.name, dict(sorted(b.items())),
                                               tuple(render_fact(p) for p in premises),
                                               tuple(render_fact(f) for f in new)))
                        if budget.steps >= limits.step_cap:
                            value = goal_value(store, goal)
                            if value is not None:
                                node.store, node.steps = store, tuple(steps)
                                break
                            return unsolved(STEP_CAP)
            except ContradictionError as exc:
                return _contradiction(store, exc)
            node.store, node.steps = store, tuple(steps)
            fp = _fingerprint(store)
            if fp in seen:
                node.mark(UNSOLVED)
                continue
            seen.add(fp)
        value = goal_value(node.store, goal)
        if value is not None:
            node.mark(SOLVED)
            return SolutionTrace(goal_text, value, list(node.steps), budget.steps, nodes,
                                 budget.elapsed())
        node.mark(EXPANDED)
        children = _children(node)
        if not children:
            node.mark(UNSOLVED)
            continue
        frontier.extend(children if limits.traversal == BFS else reversed(children))
    return unsolved(EXHAUSTED)


# --------------------------------------------------------------------------
# replay


@dataclass
class ReplayReport:
    verified: bool
    step: int | None = None      # 1-based index of the first divergent step
    reason: str = ""

    def to_dict(self) -> dict:
        return {"verified": self.verified, "step": self.step, "reason": self.reason}

    def render_text(self) -> str:
        if self.verified:
            return "trace verified"
        where = f"step {self.step}" if self.step else "final solve"
        return f"trace diverges at {where}: {self.reason}"


def replay_trace(trace: SolutionTrace, problem: ProblemCDL, kb: KnowledgeBase) -> ReplayReport:
    """Re-execute every recorded application and the final solve."""
    try:
        store = init_store(problem, kb)
    except (InvalidProblemError, ContradictionError) as exc:
        return ReplayReport(False, None, f"given conditions rejected: {exc}")
    for i, step in enumerate(trace.steps, 1):
        if step.theorem not in kb.theorems:
            return ReplayReport(False, i, f"theorem {step.theorem} is not in the knowledge base")
        theorem = kb.theorem(step.theorem)
        binding = dict(step.substitution)
        missing = {v for p in theorem.positive for v in letters(p)} - set(binding)
        if missing:
            return ReplayReport(False, i, f"substitution leaves {''.join(sorted(missing))} unbound")
        for p in theorem.premise:
            inst = kb.normalize(substitute(p, binding))
            if not premise_holds(inst, store):
                return ReplayReport(False, i, f"premise {render_fact(inst)} does not hold")
        try:
            apply_theorem(theorem, binding, store)
        except ContradictionError as exc:
            return ReplayReport(False, i, f"application is inconsistent: {exc}")
    try:
        goal = kb.normalize(parse_fact(trace.goal))
    except (CDLSyntaxError, UnknownPredicateError, ArityError) as exc:
        return ReplayReport(False, None, f"goal unreadable: {exc}")
    value = goal_value(store, goal)
    if value is None:
        return ReplayReport(False, None, "goal is not settled after the last step")
    if value != trace.value:
        return ReplayReport(False, None, f"goal value {value} differs from recorded {trace.value}")
    return ReplayReport(True)
