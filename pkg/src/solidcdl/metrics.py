"""Fuzzy-matching evaluation of predicted CDL against ground truth."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from statistics import fmean

PLACEHOLDER = "_V_"
SCORES = (1.0, 0.8, 0.5, 0.3, 0.0)

# published pattern: unsigned decimals; a fraction such as 4/3 yields 4 and 3
NUMBER_PATTERN = re.compile(r"\d+(?:\.\d+)?")
_IS_NUMBER = re.compile(r"^-?\d+(?:\.\d+)?(?:/\d+)?$")
_VARIABLE = re.compile(r"^(?:[A-Z]+|_V_)$")
_BARE_VARIABLES = re.compile(r"(?<![A-Za-z_])[A-Z]+(?![A-Za-z_(])")


def _split_top(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += (ch == "(") - (ch == ")")
        if depth < 0:
            return False
    return depth == 0


def normalize(element: str) -> str:
    """Replace point variables with ``_V_``, keeping names and numbers.

    A parameter list collapses to ``(_V_)`` when it is a single variable
    group, or when every parameter is a single point letter; lists of
    multi-letter groups keep one ``_V_`` per group.
    """
    t = "".join(element.split())
    if "(" not in t:
        if _IS_NUMBER.match(t):
            return t
        return _BARE_VARIABLES.sub(PLACEHOLDER, t)
    m = re.match(r"^(~?[A-Za-z_][A-Za-z0-9_]*)\((.*)\)$", t)
    if not m or not _balanced(m.group(2)):
        return _BARE_VARIABLES.sub(PLACEHOLDER, t)
    name, inner = m.groups()
    parts = _split_top(inner) if inner else []
    out, variables = [], []
    for part in parts:
        if _IS_NUMBER.match(part):
            out.append(part)
            variables.append(None)
        elif "(" in part:
            out.append(normalize(part))
            variables.append(None)
        elif _VARIABLE.match(part):
            out.append(PLACEHOLDER)
            variables.append(part)
        else:
            out.append(part)            # named constants such as pi
            variables.append(None)
    if parts and all(v is not None for v in variables):
        if len(parts) == 1 or all(len(v) == 1 for v in variables):
            return f"{name}({PLACEHOLDER})"
    return f"{name}({','.join(out)})"


def predicate_name(x: str) -> str:
    return x.split("(", 1)[0]


def numbers(x: str) -> set[Fraction]:
    """Numeric values in ``x``, compared by value (5 and 5.0 coincide)."""
    return {Fraction(s) for s in NUMBER_PATTERN.findall(x)}


def match_score(p: str, g: str) -> float:
    if p == g:
        return 1.0
    name_equal = predicate_name(p) == predicate_name(g)
    shared = bool(numbers(p) & numbers(g))
    if name_equal and shared:
        return 0.8
    if name_equal:
        return 0.5
    if shared:
        return 0.3
    return 0.0


def normalized_set(elements) -> list[str]:
    """Normalized elements, deduplicated, in first-occurrence order."""
    return list(dict.fromkeys(normalize(e) for e in elements))


def build_score_matrix(ps, gs) -> list[list[float]]:
    return [[match_score(p, g) for g in gs] for p in ps]


def fuzzy_jaccard(pred, gt) -> float:
    """Sum of each prediction's best score over the fuzzy union."""
    ps, gs = normalized_set(pred), normalized_set(gt)
    if not ps and not gs:
        return 1.0
    if not ps or not gs:
        return 0.0
    matrix = build_score_matrix(ps, gs)
    inter = sum(max(row) for row in matrix)
    union = len(ps) + len(gs) - inter
    return inter / union


# --------------------------------------------------------------------------
# problem-level scores


def _components(doc) -> tuple[list, list, list]:
    if hasattr(doc, "to_dict"):
        doc = doc.to_dict()
    goal = doc.get("goal_cdl") or ""
    goal = [goal] if isinstance(goal, str) and goal.strip() else list(goal or [])
    return (list(doc.get("construction_cdl") or []),
            list(doc.get("text_cdl") or []) + list(doc.get("image_cdl") or []),
            goal)


@dataclass(frozen=True)
class ParseScore:
    construction: float
    condition: float
    goal: float

    @property
    def score(self) -> float:
        return (self.construction + self.condition + self.goal) / 3

    def as_dict(self) -> dict:
        return {"construction": self.construction, "condition": self.condition,
                "goal": self.goal, "parse_score": self.score}


def parse_components(pred, gt) -> ParseScore:
    """Per-component Jaccards; text and image conditions are merged."""
    pc, pk, pg = _components(pred)
    gc, gk, gg = _components(gt)
    return ParseScore(fuzzy_jaccard(pc, gc), fuzzy_jaccard(pk, gk), fuzzy_jaccard(pg, gg))


def parse_score(pred, gt) -> float:
    """Mean of the construction, condition and goal fuzzy Jaccards.

    Both arguments may be ProblemCDL objects or raw five-field documents.
    """
    return parse_components(pred, gt).score


@dataclass
class ScoreTable:
    rows: list          # (problem id, ParseScore)

    def means(self) -> dict:
        if not self.rows:
            return {"construction": 0.0, "condition": 0.0, "goal": 0.0, "parse_score": 0.0}
        return {k: fmean(s.as_dict()[k] for _, s in self.rows)
                for k in ("construction", "condition", "goal", "parse_score")}

    def as_dict(self) -> dict:
        return {"problems": [{"id": pid, **s.as_dict()} for pid, s in self.rows],
                "mean": self.means(), "count": len(self.rows)}

    def render(self) -> str:
        head = f"{'id':<16}{'constr':>9}{'cond':>9}{'goal':>9}{'parse':>9}"
        lines = [head, "-" * len(head)]
        for pid, s in self.rows:
            lines.append(f"{pid:<16}{s.construction:>9.4f}{s.condition:>9.4f}"
                         f"{s.goal:>9.4f}{s.score:>9.4f}")
        m = self.means()
        lines.append("-" * len(head))
        lines.append(f"{'mean':<16}{m['construction']:>9.4f}{m['condition']:>9.4f}"
                     f"{m['goal']:>9.4f}{m['parse_score']:>9.4f}")
        return "\n".join(lines)


def score_corpus(predictions: dict, ground_truth: dict) -> ScoreTable:
    """Score every ground-truth id; a missing prediction scores as empty."""
    rows = []
    for pid in sorted(ground_truth):
        pred = predictions.get(pid, {})
        rows.append((pid, parse_components(pred, ground_truth[pid])))
    return ScoreTable(rows)
