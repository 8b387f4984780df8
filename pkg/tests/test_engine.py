from fractions import Fraction

import pytest
from conftest import fixture_record, problem

from solidcdl.cdl import Atom, Attr, Equation, Num, UnresolvedError, parse_expr, parse_fact
from solidcdl.engine import (EXHAUSTED, STEP_CAP, TIMEOUT, Contradiction, ContradictionError,
                             InvalidProblemError, SearchNode, SolutionTrace, SolveLimits,
                             TheoremApplicationError, Unsolved, apply_theorem, init_store,
                             match_premise, minimal_conflict, replay_trace, search,
                             solve_equations)
from solidcdl.engine.algebra import EquationSystem
from solidcdl.engine.search import EXPANDABLE, EXPANDED, SOLVED, UNSOLVED, TraceStep
from solidcdl.engine.store import GIVEN, ConditionStore, Provenance
from solidcdl.exact import Exact

SPHERE = dict(construction=["Shape(O)", "Cospherical(O)"], text=["Equal(RadiusOfSphere(O),3)"],
              goal="Value(VolumeOfSphere(O))", answer="36*pi")
PLANES = dict(construction=["Coplanar(U,ABC)", "Coplanar(V,DEF)", "Coplanar(W,GHI)"],
              text=["ParallelBetweenPlane(U,V)", "ParallelBetweenPlane(V,W)"],
              goal="ParallelBetweenPlane(U,W)", answer="True")
CUBE = ["Shape(AB,BC,CD,DA)", "Shape(EF,FG,GH,HE)", "Shape(AE,BF,CG,DH)"]


def store_of(kb, *facts):
    s = ConditionStore(kb)
    for f in facts:
        s.add(kb.normalize(parse_fact(f)), Provenance(GIVEN))
    return s


def eq(text):
    return parse_fact(text)

# --------------------------------------------------------------------------
# init_store


def test_sphere_store(kb):
    s = init_store(problem(**SPHERE), kb)
    facts = set(s.facts())
    for f in ["Shape(O)", "Cospherical(O)", "Equal(RadiusOfSphere(O),3)", "Sphere(O)", "Point(O)"]:
        assert kb.normalize(parse_fact(f)) in facts
    assert all(s.provenance_chain_ok(f) for f in facts)


def test_empty_problem_gives_empty_store(kb):
    assert len(init_store(problem(), kb)) == 0


def test_cube_with_two_edge_lengths_is_contradictory(kb):
    p = problem(CUBE, ["Cube(ABCDEFGH)", "Equal(LengthOfLine(AB),2)", "Equal(LengthOfLine(EF),3)"],
                "Value(VolumeOfCube(ABCDEFGH))")
    with pytest.raises(ContradictionError) as info:
        init_store(p, kb)
    conflict = info.value.contradiction.conflict
    assert eq("Equal(LengthOfLine(AB),2)") in conflict
    assert eq("Equal(LengthOfLine(EF),3)") in conflict


def test_given_fact_failing_checks_is_invalid(kb):
    p = problem(["Shape(O)", "Cospherical(O)"], ["Equal(LengthOfLine(AB),2)"])
    with pytest.raises(InvalidProblemError, match="Line"):
        init_store(p, kb)


def test_unknown_predicate_is_invalid(kb):
    with pytest.raises(InvalidProblemError, match="Foo"):
        init_store(problem(["Shape(A)"], ["Foo(A)"]), kb)

# --------------------------------------------------------------------------
# matching and application


def test_transitivity_matches_once(kb):
    s = init_store(problem(**PLANES), kb)
    t = kb.theorem("transitivity_between_plane_and_plane")
    subs = match_premise(t, s)
    assert {"U": "U", "V": "V", "W": "W"} in subs
    assert all(set(b) == {"U", "V", "W"} for b in subs)
    # the multi orderings (V,U) and (W,V) give only the reversed chain W-V-U besides U-V-W
    assert len({(b["U"], b["W"]) for b in subs}) == len(subs) <= 2


def test_transitivity_on_empty_store(kb):
    assert match_premise(kb.theorem("transitivity_between_plane_and_plane"), ConditionStore(kb)) == []


def test_negated_premise_blocks_match(kb):
    t = kb.theorem("perpendicular_judgment_between_line_and_plane")
    base = ["Shape(AD,BD,CD)", "Coplanar(U,BCD)", "PerpendicularBetweenLine(AD,BD)",
            "PerpendicularBetweenLine(AD,CD)"]
    assert match_premise(t, store_of(kb, *base))
    blocked = store_of(kb, "Shape(AD,BD,CD)", "Coplanar(U,BCDA)",
                       "PerpendicularBetweenLine(AD,BD)", "PerpendicularBetweenLine(AD,CD)")
    assert match_premise(t, blocked) == []


def test_sphere_volume_application(kb):
    s = init_store(problem(**SPHERE), kb)
    t = kb.theorem("sphere_volume_formula")
    (b,) = match_premise(t, s)
    assert apply_theorem(t, b, s) == 1
    expected = kb.normalize(eq("Equal(VolumeOfSphere(O),Mul(4/3,pi,RadiusOfSphere(O),"
                               "RadiusOfSphere(O),RadiusOfSphere(O)))"))
    assert expected in s.equation_list()
    assert s.provenance[expected].theorem == "sphere_volume_formula"
    assert apply_theorem(t, b, s) == 0


def test_height_of_cylinder_judgment(kb):
    s = store_of(kb, "Shape(PQ,QP,AB)", "Cocircular(P)", "Cocircular(Q)", "Coplanar(P,A)",
                 "Coplanar(Q,B)", "Cylinder(P,Q)", "PerpendicularBetweenLineAndPlane(AB,P)")
    t = kb.theorem("height_of_cylinder_judgment")
    subs = match_premise(t, s)
    assert {"P": "P", "Q": "Q", "A": "A", "B": "B"} in subs
    apply_theorem(t, {"P": "P", "Q": "Q", "A": "A", "B": "B"}, s)
    assert kb.normalize(eq("Equal(LengthOfLine(AB),HeightOfCylinder(P,Q))")) in s.equation_list()


def test_bad_conclusion_signals_authoring_bug(kb):
    from solidcdl.knowledge import load_knowledge_base
    preds = ("predicate: Rel(AB)\nkind: Relation\ncheck: Line(AB)\n\n"
             "predicate: Other(AB)\nkind: Relation\ncheck: Line(AB)\n\n"
             "predicate: Tag(AB)\nkind: Relation\ncheck: Other(AB)\n")
    bank = load_knowledge_base(preds, "theorem: bad\npremise: Rel(AB)\nconclusion: Tag(AB)\n")
    s = ConditionStore(bank)
    s.add(parse_fact("Rel(AB)"), Provenance(GIVEN))
    s.add(parse_fact("Line(AB)"), Provenance(GIVEN))
    with pytest.raises(TheoremApplicationError):
        apply_theorem(bank.theorem("bad"), {"A": "A", "B": "B"}, s)

# --------------------------------------------------------------------------
# equations


def test_solve_sphere_volume(kb):
    s = store_of(kb, "Shape(O)", "Cospherical(O)", "Equal(RadiusOfSphere(O),3)",
                 "Equal(VolumeOfSphere(O),Mul(4/3,pi,RadiusOfSphere(O),RadiusOfSphere(O),RadiusOfSphere(O)))")
    assert solve_equations(s, parse_expr("VolumeOfSphere(O)")) == Exact.rational(36) * Exact.pi()


def test_solve_substitution_chain(kb):
    s = store_of(kb, "Shape(AM,MB)", "Equal(LengthOfLine(AM),2)",
                 "Equal(LengthOfLine(AM),LengthOfLine(MB))")
    assert solve_equations(s, parse_expr("LengthOfLine(MB)")) == Exact.rational(2)


def test_conflicting_values():
    x = Attr("LengthOfLine", ("AB",))
    eqs = [Equation(x, Num(Fraction(2))), Equation(x, Num(Fraction(3)))]
    with pytest.raises(ContradictionError) as info:
        EquationSystem(eqs)
    assert set(info.value.contradiction.conflict) >= set(eqs)
    assert set(minimal_conflict(eqs)) == set(eqs)


def test_minimal_conflict_drops_bystanders():
    x, y = Attr("LengthOfLine", ("AB",)), Attr("LengthOfLine", ("CD",))
    eqs = [Equation(y, Num(Fraction(7))), Equation(x, Num(Fraction(2))),
           Equation(x, Num(Fraction(3)))]
    assert minimal_conflict(eqs) == eqs[1:]


def test_underdetermined_goal(kb):
    s = store_of(kb, "Shape(AB,CD)", "Equal(LengthOfLine(AB),LengthOfLine(CD))")
    with pytest.raises(UnresolvedError):
        solve_equations(s, parse_expr("LengthOfLine(AB)"))


def test_quadratic_takes_positive_root(kb):
    s = store_of(kb, "Shape(AB)", "Equal(Mul(LengthOfLine(AB),LengthOfLine(AB)),12)")
    assert solve_equations(s, parse_expr("LengthOfLine(AB)")) == Exact.rational(12).root(2)

# --------------------------------------------------------------------------
# search


def test_sphere_search(kb):
    r = search(problem(**SPHERE), kb)
    assert isinstance(r, SolutionTrace)
    assert r.exact_value == Exact.rational(36) * Exact.pi()
    assert "sphere_volume_formula" in r.theorems


def test_goal_entailed_by_givens(kb):
    r = search(problem(SPHERE["construction"], SPHERE["text"], "Value(RadiusOfSphere(O))"), kb)
    assert isinstance(r, SolutionTrace) and r.steps == [] and r.value == "3"


def test_plane_transitivity_relation_goal(kb):
    r = search(problem(**PLANES), kb)
    assert isinstance(r, SolutionTrace)
    assert r.value == "True"
    assert r.theorems == ["transitivity_between_plane_and_plane"]


def test_depth_first_also_solves(kb):
    r = search(problem(**SPHERE), kb, SolveLimits(traversal="dfs"))
    assert isinstance(r, SolutionTrace) and r.value == "36*pi"


def test_exhausted(kb):
    p = problem(["Shape(O)", "Cospherical(O)"], [], "Value(VolumeOfSphere(O))")
    r = search(p, kb)
    assert isinstance(r, Unsolved) and r.reason == EXHAUSTED


def test_step_cap(kb):
    r = search(fixture_record("hard_circumscribed.json").problem, kb, SolveLimits(step_cap=3))
    assert isinstance(r, Unsolved) and r.reason == STEP_CAP
    assert r.step_count <= 3


def test_timeout(kb):
    r = search(fixture_record("hard_circumscribed.json").problem, kb, SolveLimits(time_limit=0.001))
    assert isinstance(r, Unsolved) and r.reason == TIMEOUT


def test_contradiction_result(kb):
    r = search(fixture_record("cube_contradiction.json").problem, kb)
    assert isinstance(r, Contradiction)
    assert "given" in r.sources[("Equal(LengthOfLine(AB),2)")]
    assert "Equal(LengthOfLine(EF),3)" in r.render()


def test_search_needs_goal(kb):
    with pytest.raises(InvalidProblemError):
        search(problem(SPHERE["construction"], SPHERE["text"]), kb)


def test_search_is_deterministic(kb):
    p = fixture_record("sphere_r3.json").problem
    a, b = search(p, kb), search(p, kb)
    assert a.to_dict(timing=False) == b.to_dict(timing=False)


@pytest.mark.parametrize("bad", [dict(time_limit=0), dict(step_cap=0), dict(traversal="best")])
def test_limits_validated(bad):
    with pytest.raises(ValueError):
        SolveLimits(**bad)


def test_node_transitions():
    n = SearchNode(None)
    n.mark(EXPANDED)
    n.mark(UNSOLVED)
    with pytest.raises(RuntimeError):
        n.mark(SOLVED)
    m = SearchNode(None)
    assert m.state == EXPANDABLE
    m.mark(SOLVED)
    with pytest.raises(RuntimeError):
        m.mark(EXPANDED)

# --------------------------------------------------------------------------
# traces


def test_trace_serialization_round_trip(kb):
    r = search(problem(**SPHERE), kb)
    again = SolutionTrace.from_dict(r.to_dict())
    assert again.to_dict() == r.to_dict()
    assert "sphere_volume_formula" in r.render_text()


def test_replay_verifies(kb):
    p = problem(**SPHERE)
    assert replay_trace(search(p, kb), p, kb).verified


def test_replay_with_deleted_premise(kb):
    p = problem(["Shape(PA,AO,OP)", "Cospherical(O,A)"],
                ["IsTangentOfSphere(PA,O)", "Equal(LengthOfLine(OA),3)", "Equal(LengthOfLine(PA),4)"],
                "Value(LengthOfLine(OP))", "5")
    trace = search(p, kb)
    assert trace.value == "5"
    stripped = problem(p.to_dict()["construction_cdl"],
                       ["Equal(LengthOfLine(OA),3)", "Equal(LengthOfLine(PA),4)"],
                       "Value(LengthOfLine(OP))")
    report = replay_trace(trace, stripped, kb)
    assert not report.verified and report.step == 1
    assert "IsTangentOfSphere" in report.reason


def test_replay_against_kb_without_theorem(kb):
    p = problem(**SPHERE)
    trace = search(p, kb)
    report = replay_trace(trace, p, kb.without_theorem("sphere_volume_formula"))
    assert not report.verified
    assert "sphere_volume_formula" in report.reason


def test_replay_rejects_unbound_substitution(kb):
    p = problem(**SPHERE)
    trace = search(p, kb)
    trace.steps = [TraceStep("sphere_volume_formula", {}, (), ())]
    assert not replay_trace(trace, p, kb).verified


def test_replayed_store_is_monotone_and_sound(kb):
    p = fixture_record("sphere_r3.json").problem
    trace = search(p, kb)
    store = init_store(p, kb)
    size = len(store)
    for step in trace.steps:
        before = set(store.facts())
        apply_theorem(kb.theorem(step.theorem), step.substitution, store)
        assert before <= set(store.facts())
        assert len(store) >= size
        size = len(store)
    assert all(store.provenance_chain_ok(f) for f in store.facts())
    assert store.invalid_facts() == []
    assert isinstance(parse_fact("Sphere(O)"), Atom)
