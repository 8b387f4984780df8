"""Formalized problems (ProblemCDL) and corpus records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .cdl import Atom, CDLSyntaxError, ValueGoal, parse_fact, render_fact

SUBJECTS = ("CSS", "SMR", "SSI", "MSGF")
CDL_FIELDS = ("construction_cdl", "text_cdl", "image_cdl", "goal_cdl", "problem_answer")


class MalformedProblemError(ValueError):
    """A problem document lacks required fields or has the wrong types."""


@dataclass(frozen=True)
class ProblemCDL:
    construction: tuple = ()
    text: tuple = ()
    image: tuple = ()
    goal: object = None          # ValueGoal or a relation Atom
    answer: str = ""

    @property
    def conditions(self) -> tuple:
        return self.text + self.image

    @property
    def given(self) -> tuple:
        return self.construction + self.text + self.image

    @classmethod
    def from_dict(cls, doc: dict) -> ProblemCDL:
        """Build from the five-field document; raises CDLSyntaxError on bad facts."""
        check_schema(doc)

        def facts(key):
            out = []
            for i, s in enumerate(doc.get(key) or []):
                try:
                    out.append(parse_fact(s))
                except CDLSyntaxError as exc:
                    raise CDLSyntaxError(f"{key}[{i}]: {exc}", s, exc.pos) from None
            return tuple(out)

        goal_text = doc.get("goal_cdl") or ""
        goal = parse_fact(goal_text) if goal_text.strip() else None
        if goal is not None and not isinstance(goal, (ValueGoal, Atom)):
            raise CDLSyntaxError("goal must be Value(...) or a relation", goal_text)
        return cls(facts("construction_cdl"), facts("text_cdl"), facts("image_cdl"),
                   goal, str(doc.get("problem_answer", "")).strip())

    def to_dict(self) -> dict:
        return {
            "construction_cdl": [render_fact(f) for f in self.construction],
            "text_cdl": [render_fact(f) for f in self.text],
            "image_cdl": [render_fact(f) for f in self.image],
            "goal_cdl": render_fact(self.goal) if self.goal is not None else "",
            "problem_answer": self.answer,
        }


def check_schema(doc) -> None:
    """Structural check of a CDL document (types only, no vocabulary)."""
    if not isinstance(doc, dict):
        raise MalformedProblemError("CDL document must be an object")
    for key in ("construction_cdl", "text_cdl", "image_cdl"):
        value = doc.get(key, [])
        if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
            raise MalformedProblemError(f"{key} must be a list of strings")
    if not isinstance(doc.get("goal_cdl", ""), str):
        raise MalformedProblemError("goal_cdl must be a single string")
    if not isinstance(doc.get("problem_answer", ""), (str, int, float)):
        raise MalformedProblemError("problem_answer must be text")


@dataclass
class ProblemRecord:
    """One corpus entry: the problem statement plus its optional annotation."""

    id: str
    text: str = ""
    image: str | None = None
    cdl: dict | None = None      # raw five-field document
    answer: str = ""
    subjects: tuple = ()
    source: Path | None = field(default=None, compare=False)

    @property
    def problem(self) -> ProblemCDL:
        if self.cdl is None:
            raise MalformedProblemError(f"{self.id}: record has no CDL annotation")
        return ProblemCDL.from_dict(self.cdl)

    @classmethod
    def from_dict(cls, doc: dict, source: Path | None = None) -> ProblemRecord:
        if not isinstance(doc, dict):
            raise MalformedProblemError("record must be an object")
        pid = doc.get("id") or (source.stem if source else None)
        if not pid:
            raise MalformedProblemError("record has no id")
        cdl = doc.get("cdl")
        if cdl is None and "construction_cdl" in doc:
            cdl = {k: doc[k] for k in CDL_FIELDS if k in doc}
        if cdl is not None:
            check_schema(cdl)
        subjects = tuple(doc.get("subjects", ()))
        bad = [s for s in subjects if s not in SUBJECTS]
        if bad:
            raise MalformedProblemError(f"{pid}: unknown subject tags {bad}")
        answer = str(doc.get("answer", (cdl or {}).get("problem_answer", ""))).strip()
        return cls(str(pid), doc.get("text", ""), doc.get("image"), cdl, answer,
                   subjects, source)

    def to_dict(self) -> dict:
        out = {"id": self.id, "text": self.text, "image": self.image,
               "answer": self.answer, "subjects": list(self.subjects)}
        if self.cdl is not None:
            out["cdl"] = self.cdl
        return out


def load_record(path) -> ProblemRecord:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedProblemError(f"{path.name}: invalid JSON ({exc.msg})") from None
    return ProblemRecord.from_dict(doc, path)


def load_problem(path) -> ProblemCDL:
    """A problem file may be a bare CDL document or a full record."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedProblemError(f"{path.name}: invalid JSON ({exc.msg})") from None
    if isinstance(doc, dict) and "cdl" in doc:
        return ProblemRecord.from_dict(doc, path).problem
    return ProblemCDL.from_dict(doc)
