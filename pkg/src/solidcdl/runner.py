"""Batch solving over a corpus directory and the resulting run report."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean

from .cdl import CDLSyntaxError, answers_equal
from .engine import (Contradiction, ContradictionError, InvalidProblemError, SolutionTrace,
                     SolveLimits, Unsolved, search)
from .knowledge import KnowledgeBase, default_gdl_paths, load_knowledge_base
from .problem import SUBJECTS, MalformedProblemError, load_record

log = logging.getLogger(__name__)

SOLVED, UNSOLVED, CONTRADICTION, INVALID = "solved", "unsolved", "contradiction", "invalid"
ENVELOPE_STEPS = 57
ENVELOPE_SECONDS = 1.2
ENVELOPE_SHARE = 0.8
ANSWER_REL_TOL = 1e-6


def answer_matches(value: str | None, reference: str) -> bool:
    if value is None or not reference:
        return False
    if value == "True" or reference == "True":
        return value == reference
    try:
        return answers_equal(value, reference, ANSWER_REL_TOL)
    except (CDLSyntaxError, ArithmeticError, LookupError):
        return False


@dataclass(frozen=True)
class Outcome:
    id: str
    subjects: tuple
    status: str
    value: str | None = None
    reason: str = ""
    steps: int = 0
    nodes: int = 0
    wall_time: float = 0.0
    matched: bool = False

    def to_dict(self, timing: bool = True) -> dict:
        d = {"id": self.id, "subjects": list(self.subjects), "status": self.status,
             "value": self.value, "reason": self.reason, "steps": self.steps,
             "nodes": self.nodes, "matched": self.matched}
        if timing:
            d["wall_time"] = round(self.wall_time, 6)
        return d


@dataclass
class RunReport:
    outcomes: list = field(default_factory=list)
    skipped: list = field(default_factory=list)     # (file name, error text)
    envelope_steps: int = ENVELOPE_STEPS
    envelope_seconds: float = ENVELOPE_SECONDS

    @property
    def total(self) -> int:
        return len(self.outcomes)

    def accuracy(self, subject: str | None = None) -> float | None:
        rows = [o for o in self.outcomes if subject is None or subject in o.subjects]
        if not rows:
            return None
        return sum(o.matched for o in rows) / len(rows)

    def subject_counts(self) -> dict:
        return {s: sum(s in o.subjects for o in self.outcomes) for s in SUBJECTS}

    def within_envelope(self) -> float | None:
        """Share of solved problems inside the step and time envelope."""
        solved = [o for o in self.outcomes if o.status == SOLVED]
        if not solved:
            return None
        inside = [o for o in solved
                  if o.steps <= self.envelope_steps and o.wall_time <= self.envelope_seconds]
        return len(inside) / len(solved)

    @property
    def envelope_ok(self) -> bool:
        share = self.within_envelope()
        return share is None or share >= ENVELOPE_SHARE

    def aggregates(self) -> dict:
        solved = [o for o in self.outcomes if o.status == SOLVED]
        return {
            "total": self.total,
            "solved": len(solved),
            "matched": sum(o.matched for o in self.outcomes),
            "accuracy": {"overall": self.accuracy(),
                         **{s: self.accuracy(s) for s in SUBJECTS}},
            "subject_counts": self.subject_counts(),
            "avg_steps": fmean(o.steps for o in solved) if solved else None,
        }

    def to_dict(self, timing: bool = True) -> dict:
        """Structured report; with ``timing=False`` it is identical across runs."""
        d = {"problems": [o.to_dict(timing) for o in self.outcomes],
             "skipped": [{"file": f, "error": e} for f, e in self.skipped],
             "aggregates": self.aggregates()}
        if timing:
            solved = [o for o in self.outcomes if o.status == SOLVED]
            d["aggregates"]["avg_time"] = fmean(o.wall_time for o in solved) if solved else None
            d["envelope"] = {"steps": self.envelope_steps, "seconds": self.envelope_seconds,
                             "share_within": self.within_envelope(), "ok": self.envelope_ok}
        return d

    def canonical(self) -> str:
        return json.dumps(self.to_dict(timing=False), sort_keys=True)

    def render_text(self) -> str:
        lines = [f"{'problem':<40}{'status':<15}{'value':<16}{'steps':>7}{'time':>9}  match"]
        for o in self.outcomes:
            shown = o.value if o.status == SOLVED else (o.reason or o.status)
            lines.append(f"{o.id:<40}{o.status:<15}{str(shown):<16}{o.steps:>7}"
                         f"{o.wall_time:>8.3f}s  {'yes' if o.matched else 'no'}")
        for f, e in self.skipped:
            lines.append(f"{f:<40}{'skipped':<15}{e}")
        cols = ["Overall"] + list(SUBJECTS)
        accs = [self.accuracy()] + [self.accuracy(s) for s in SUBJECTS]
        lines += ["", "".join(f"{c:>10}" for c in cols),
                  "".join(f"{'-' if a is None else f'{100 * a:.1f}%':>10}" for a in accs)]
        agg = self.to_dict()["aggregates"]
        if agg["avg_steps"] is not None:
            lines.append(f"avg steps {agg['avg_steps']:.1f}, avg time {agg['avg_time']:.3f}s")
        share = self.within_envelope()
        if share is not None:
            lines.append(f"{100 * share:.1f}% of solved problems within "
                         f"{self.envelope_steps} steps / {self.envelope_seconds}s")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# solving one record (also the worker entry point for parallel runs)

_KB_CACHE: dict = {}


def _kb_for(paths: tuple) -> KnowledgeBase:
    if paths not in _KB_CACHE:
        _KB_CACHE[paths] = load_knowledge_base(*paths)
    return _KB_CACHE[paths]


def solve_record(record, kb: KnowledgeBase, limits: SolveLimits) -> Outcome:
    start = time.perf_counter()
    try:
        result = search(record.problem, kb, limits)
    except (InvalidProblemError, CDLSyntaxError, MalformedProblemError) as exc:
        return Outcome(record.id, record.subjects, INVALID, reason=str(exc).splitlines()[0],
                       wall_time=time.perf_counter() - start)
    except ContradictionError as exc:
        result = exc.contradiction
    elapsed = time.perf_counter() - start
    if isinstance(result, SolutionTrace):
        return Outcome(record.id, record.subjects, SOLVED, result.value, "", result.step_count,
                       result.nodes, elapsed, answer_matches(result.value, record.answer))
    if isinstance(result, Unsolved):
        return Outcome(record.id, record.subjects, UNSOLVED, None, result.reason,
                       result.step_count, result.nodes, elapsed)
    assert isinstance(result, Contradiction)
    return Outcome(record.id, record.subjects, CONTRADICTION, None, result.explanation,
                   wall_time=elapsed)


def _solve_path(args) -> Outcome:
    path, kb_paths, limits = args
    return solve_record(load_record(path), _kb_for(kb_paths), limits)


def corpus_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.json"))


def batch_solve(directory, kb_paths=None, limits: SolveLimits | None = None,
                parallel: int = 1, envelope_steps: int = ENVELOPE_STEPS,
                envelope_seconds: float = ENVELOPE_SECONDS) -> RunReport:
    """Solve every record in ``directory``; malformed records are skipped and listed."""
    kb_paths = tuple(str(p) for p in (kb_paths or default_gdl_paths()))
    limits = limits or SolveLimits()
    report = RunReport(envelope_steps=envelope_steps, envelope_seconds=envelope_seconds)
    jobs = []
    for path in corpus_files(directory):
        try:
            record = load_record(path)
            record.problem      # parse now so bad CDL is reported as malformed
        except (MalformedProblemError, CDLSyntaxError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            report.skipped.append((path.name, str(exc).splitlines()[0]))
            continue
        jobs.append((str(path), kb_paths, limits))
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(_solve_path, jobs))
    else:
        outcomes = [_solve_path(j) for j in jobs]
    report.outcomes = sorted(outcomes, key=lambda o: o.id)
    if not report.envelope_ok:
        log.warning("only %.1f%% of solved problems finished within %d steps / %.2fs",
                    100 * report.within_envelope(), envelope_steps, envelope_seconds)
    return report
