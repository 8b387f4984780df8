"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal so they survive output capture.
"""

import json
import random
import time
import warnings
from contextlib import contextmanager

import httpx
import pytest
from conftest import CORPUS, FIXTURES, fixture_record, gateway_fixture
from test_metrics import naive_jaccard

from solidcdl import gateway as gw
from solidcdl.engine import Contradiction, SolutionTrace, SolveLimits, replay_trace, search
from solidcdl.metrics import build_score_matrix, fuzzy_jaccard, match_score, normalize
from solidcdl.problem import load_record
from solidcdl.runner import ANSWER_REL_TOL, answer_matches, batch_solve, corpus_files
from solidcdl.solids import LabelSource, compose, is_closed_surface, random_chain, random_glue_pair

# pinned tolerances and budgets
RUNTIME = {1: 1.0, 2: 10.0, 3: 10.0, 4: 60.0, 5: 1.0}
TRIALS = 1000
CORPUS_SIZE = 25
SOLVE_BUDGET = 300.0
ENVELOPE_STEPS, ENVELOPE_SECONDS, ENVELOPE_SHARE = 57, 1.2, 0.8


@contextmanager
def criterion(request, number, title):
    """Time the block, enforce its runtime budget and print the verdict line."""
    limit = RUNTIME.get(number)
    start = time.perf_counter()
    verdict, detail = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if limit is not None:
            assert elapsed < limit, f"took {elapsed:.2f}s, budget {limit}s"
        verdict = "PASS"
    except AssertionError as exc:
        detail = f" ({str(exc).splitlines()[0]})"
        raise
    finally:
        elapsed = time.perf_counter() - start
        budget = f" < {limit:g}s" if limit is not None else ""
        line = f"[criterion {number}] {verdict} {title}: {elapsed:.2f}s{budget}{detail}"
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)


@pytest.fixture(scope="module")
def corpus_run():
    return batch_solve(CORPUS)

# --------------------------------------------------------------------------


NORMALIZATION = [
    ("Equal(LengthOfLine(A,B),5)", "Equal(LengthOfLine(_V_),5)"),
    ("Equal(HeightOfCone(O,P),12)", "Equal(HeightOfCone(_V_),12)"),
    ("Shape(AB,BC,CD,DA)", "Shape(_V_,_V_,_V_,_V_)"),
    ("Collinear(PABQ)", "Collinear(_V_)"),
]
MATCH = [
    ("Equal(_V_,5)", "Equal(_V_,5)", 1.0),
    ("Equal(_V_,5)", "Equal(_V_,5.0)", 0.8),
    ("Equal(_V_,5)", "Equal(_V_,3)", 0.5),
    ("Equal(_V_,5)", "LengthOf(_V_,5)", 0.3),
    ("Equal(_V_,5)", "LengthOf(_V_,3)", 0.0),
]


def test_1_metrics_golden(request):
    with criterion(request, 1, "metrics golden suite"):
        for raw, expected in NORMALIZATION:
            assert normalize(raw) == expected, raw
        for p, g, score in MATCH:
            assert match_score(p, g) == score, (p, g)
        assert build_score_matrix(["Equal(_V_,5)"], ["Equal(_V_,3)", "Equal(_V_,5)"]) == [[0.5, 1.0]]
        assert fuzzy_jaccard([], []) == 1.0
        assert fuzzy_jaccard(["Shape(AB)"], []) == 0.0
        assert fuzzy_jaccard([], ["Shape(AB)"]) == 0.0


def _random_set(rng):
    names = ["Equal", "Shape", "Cone", "LengthOfLine", "Collinear", "Value", "Sphere"]
    nums = ["", "3", "5", "5.0", "4/3", "12", "0.5"]
    out = []
    for _ in range(rng.randint(0, 6)):
        pts = "".join(rng.choice("ABCDOPQ") for _ in range(rng.randint(1, 3)))
        num = rng.choice(nums)
        out.append(f"{rng.choice(names)}({pts},{num})" if num else f"{rng.choice(names)}({pts})")
    return out


def test_2_fuzzy_jaccard_oracle(request):
    rng = random.Random(20240601)
    with criterion(request, 2, f"fuzzy Jaccard vs brute-force oracle, {TRIALS} pairs"):
        for _ in range(TRIALS):
            p, g = _random_set(rng), _random_set(rng)
            assert fuzzy_jaccard(p, g) == naive_jaccard(p, g), (p, g)


def test_3_solids_algebra(request):
    with criterion(request, 3, f"solid composition laws, {TRIALS} randomized glues"):
        for seed in range(TRIALS):
            a, sa, b, sb = random_glue_pair(random.Random(seed))
            glued = compose(a, sa, b, sb)
            assert is_closed_surface(glued), seed
            assert glued == compose(b, sb, a, sa), seed
            a, sa, b, sb, sb2, c, sc = random_chain(random.Random(seed), LabelSource())
            left = compose(compose(a, sa, b, sb), sb2, c, sc)
            right = compose(a, sa, compose(b, sb2, c, sc), sb)
            assert left == right, seed


def test_4_engine_corpus(request, kb):
    files = corpus_files(CORPUS)
    with criterion(request, 4, f"curated corpus solved and replayed, rel_tol {ANSWER_REL_TOL:g}"):
        assert len(files) == CORPUS_SIZE
        for f in files:
            rec = load_record(f)
            start = time.perf_counter()
            result = search(rec.problem, kb, SolveLimits(time_limit=SOLVE_BUDGET))
            assert time.perf_counter() - start < SOLVE_BUDGET, rec.id
            assert isinstance(result, SolutionTrace), (rec.id, result)
            assert answer_matches(result.value, rec.answer), (rec.id, result.value, rec.answer)
            assert replay_trace(result, rec.problem, kb).verified, rec.id


def test_5_contradiction(request, kb):
    with criterion(request, 5, "cube with two side lengths is contradictory"):
        result = search(fixture_record("cube_contradiction.json").problem, kb)
        assert isinstance(result, Contradiction)
        named = result.render()
        assert "Equal(LengthOfLine(AB),2)" in named
        assert "Equal(LengthOfLine(EF),3)" in named


def test_6_step_time_report(request, corpus_run):
    report = corpus_run.to_dict()
    share_text = f"{100 * (report['envelope']['share_within'] or 0):.0f}% within envelope"
    with criterion(request, 6, f"step/time report fields present and consistent, {share_text}"):
        assert report["envelope"]["steps"] == ENVELOPE_STEPS
        assert report["envelope"]["seconds"] == ENVELOPE_SECONDS
        solved = [p for p in report["problems"] if p["status"] == "solved"]
        assert len(report["problems"]) == CORPUS_SIZE
        for p in report["problems"]:
            assert isinstance(p["steps"], int) and p["steps"] >= 0
            assert isinstance(p["wall_time"], float) and p["wall_time"] >= 0
        inside = [p for p in solved
                  if p["steps"] <= ENVELOPE_STEPS and p["wall_time"] <= ENVELOPE_SECONDS]
        share = len(inside) / len(solved)
        assert report["envelope"]["share_within"] == share
        assert report["envelope"]["ok"] == (share >= ENVELOPE_SHARE)
        if share < ENVELOPE_SHARE:
            # soft criterion: report, don't fail
            warnings.warn(f"only {100 * share:.1f}% of solved problems inside the envelope")


GATEWAY_CASES = {
    "clean": set(),
    "illegal_predicate": {gw.ILLEGAL_PREDICATE},
    "misplaced_fact": {gw.MISPLACED_FACT},
    "misplaced_predicate": {gw.MISPLACED_PREDICATE},
    "answer_units": {gw.ANSWER_NOT_PURE},
    "goal_not_value": {gw.GOAL_NOT_VALUE},
    "illegal_operator": {gw.ILLEGAL_OPERATOR},
    "whitespace": {gw.WHITESPACE},
    "undeclared_entity": {gw.UNDECLARED_ENTITY},
}


def test_7_gateway(request, kb):
    cfg = gw.load_provider_config(FIXTURES / "provider.json")
    problem = gw.ProblemInput(load_record(FIXTURES / "sphere_parse_request.json").text)
    with criterion(request, 7, "gateway fixtures classified, prompt byte-deterministic"):
        first = gw.build_parse_prompt(gw.select_samples(45), kb, problem).to_bytes()
        second = gw.build_parse_prompt(gw.select_samples(45), kb, problem).to_bytes()
        assert first == second
        for name, kinds in GATEWAY_CASES.items():
            body = {"choices": [{"message": {"content": json.dumps(gateway_fixture(name))}}]}
            client = httpx.Client(transport=httpx.MockTransport(
                lambda r, body=body: httpx.Response(200, json=body)))
            raw = gw.request_parse(cfg, gw.build_parse_prompt(gw.select_samples(15), kb, problem),
                                   client=client)
            report = gw.validate_model_output(gw.completion_text(raw), kb)
            assert report.kinds == kinds, (name, report.render())


def test_8_determinism(request, corpus_run):
    with criterion(request, 8, "two batch runs give identical reports"):
        again = batch_solve(CORPUS)
        assert corpus_run.canonical() == again.canonical()
