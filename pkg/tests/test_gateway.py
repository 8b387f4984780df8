import json
import socket

import httpx
import pytest
from conftest import FIXTURES, gateway_fixture

from solidcdl import gateway as gw
from solidcdl.cdl import answers_equal, parse_answer
from solidcdl.exact import Exact

PROBLEM = gw.ProblemInput("The radius of sphere O is 3. Find the volume of the sphere.")


@pytest.fixture
def cfg():
    return gw.load_provider_config(FIXTURES / "provider.json")


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    def refuse(*a, **k):
        raise AssertionError("tests must not open network connections")
    monkeypatch.setattr(socket, "create_connection", refuse)


def completion(content):
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def mock_client(*responses, seen=None):
    queue = list(responses)

    def handler(request):
        if seen is not None:
            seen.append(request)
        r = queue.pop(0)
        if isinstance(r, Exception):
            raise r
        return r
    return httpx.Client(transport=httpx.MockTransport(handler))

# --------------------------------------------------------------------------
# prompts


def test_prompt_is_deterministic(kb):
    a = gw.build_parse_prompt(gw.select_samples(15), kb, PROBLEM)
    b = gw.build_parse_prompt(gw.select_samples(15), kb, PROBLEM)
    assert a.to_bytes() == b.to_bytes()
    assert a.sample_count == 15


@pytest.mark.parametrize("n", gw.SAMPLE_COUNTS)
def test_standard_sample_counts(kb, n):
    bundle = gw.build_parse_prompt(gw.select_samples(n), kb, PROBLEM)
    assert bundle.sample_count == n and bundle.warnings == ()
    assert f"Example {n}:" in bundle.render()


def test_nonstandard_count_rejected(kb):
    with pytest.raises(gw.SampleCountError):
        gw.build_parse_prompt(gw.select_samples(10), kb, PROBLEM)


def test_zero_samples_override_warns(kb, caplog):
    bundle = gw.build_parse_prompt([], kb, PROBLEM, allow_any_count=True)
    assert bundle.sample_count == 0
    assert bundle.warnings
    assert "sample count 0" in caplog.text


def test_too_many_samples():
    with pytest.raises(gw.SampleCountError):
        gw.select_samples(46)


def test_predicate_list_has_one_line_per_predicate(kb):
    lines = gw.predicate_list(kb).splitlines()
    assert len(lines) == kb.report.total_predicates
    assert "Sphere(O)" in lines


def test_prompt_contains_vocabulary_and_problem(kb):
    text = gw.build_parse_prompt(gw.select_samples(25), kb, PROBLEM).render()
    assert gw.predicate_list(kb) in text
    assert text.rstrip().endswith(PROBLEM.text)


def test_designed_examples_are_valid(kb):
    for ex in gw.load_designed_examples():
        report = gw.validate_model_output(ex["cdl"], kb)
        assert report.ok, (ex["id"], report.render())


def test_solve_prompt_has_marker():
    text = gw.build_solve_prompt(PROBLEM).render()
    assert gw.FINAL_ANSWER.strip() in text
    assert text.endswith(PROBLEM.text)

# --------------------------------------------------------------------------
# output validation


def test_clean_document(kb):
    report = gw.validate_model_output(gateway_fixture("clean"), kb)
    assert report.ok and report.problem is not None


@pytest.mark.parametrize("name,kind", [
    ("illegal_predicate", gw.ILLEGAL_PREDICATE),
    ("undeclared_entity", gw.UNDECLARED_ENTITY),
    ("whitespace", gw.WHITESPACE),
    ("goal_not_value", gw.GOAL_NOT_VALUE),
    ("answer_units", gw.ANSWER_NOT_PURE),
    ("illegal_operator", gw.ILLEGAL_OPERATOR),
    ("misplaced_fact", gw.MISPLACED_FACT),
    ("misplaced_predicate", gw.MISPLACED_PREDICATE),
])
def test_single_violation_fixtures(kb, name, kind):
    report = gw.validate_model_output(gateway_fixture(name), kb)
    assert report.kinds == {kind}, report.render()
    assert report.violations[0].rule == gw.RULE_OF[kind]


def test_violations_accumulate(kb):
    doc = gateway_fixture("illegal_predicate")
    doc["problem_answer"] = "12*pi cm^3"
    assert gw.validate_model_output(doc, kb).kinds == {gw.ILLEGAL_PREDICATE, gw.ANSWER_NOT_PURE}


def test_fenced_json_is_accepted(kb):
    raw = "Here you go:\n```json\n" + json.dumps(gateway_fixture("clean")) + "\n```"
    assert gw.validate_model_output(raw, kb).ok


@pytest.mark.parametrize("raw", ["no json here", '{"text_cdl": []}', '{"construction_cdl": 3, '
                                 '"text_cdl": [], "image_cdl": [], "goal_cdl": "", "problem_answer": ""}'])
def test_malformed_output(kb, raw):
    with pytest.raises(gw.MalformedOutputError):
        gw.validate_model_output(raw, kb)

# --------------------------------------------------------------------------
# final answers


@pytest.mark.parametrize("text,expected", [
    ("Step 1 ...\nFINAL ANSWER: 36*pi", Exact.rational(36) * Exact.pi()),
    ("r = 3\nFINAL ANSWER: 12\nwait, correction\nFINAL ANSWER: 10", Exact.rational(10)),
])
def test_final_answer(text, expected):
    assert gw.extract_final_answer(text) == expected


def test_final_answer_missing_marker():
    with pytest.raises(gw.MissingMarkerError):
        gw.extract_final_answer("the answer is 10")


def test_final_answer_compares_with_reference():
    assert answers_equal(gw.extract_final_answer("FINAL ANSWER: 36*pi"), parse_answer("36*pi"))

# --------------------------------------------------------------------------
# provider client


def test_request_echo(kb, cfg, monkeypatch):
    monkeypatch.setenv("SOLIDCDL_TEST_KEY", "secret")
    seen = []
    doc = gateway_fixture("clean")
    client = mock_client(httpx.Response(200, json=completion(json.dumps(doc))), seen=seen)
    bundle = gw.build_parse_prompt(gw.select_samples(15), kb, PROBLEM)
    body = gw.request_parse(cfg, bundle, client=client)
    assert json.loads(gw.completion_text(body)) == doc
    (req,) = seen
    assert req.headers["Authorization"] == "Bearer secret"
    sent = json.loads(req.content)
    assert sent["model"] == "test-model"
    assert sent["messages"][0]["content"][0]["text"] == bundle.render()


def test_no_key_no_auth_header(kb, cfg, monkeypatch):
    monkeypatch.delenv("SOLIDCDL_TEST_KEY", raising=False)
    seen = []
    client = mock_client(httpx.Response(200, json=completion("{}")), seen=seen)
    gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client)
    assert "Authorization" not in seen[0].headers


def test_retries_rate_limit(cfg):
    sleeps = []
    client = mock_client(httpx.Response(429), httpx.Response(429),
                         httpx.Response(200, json=completion("ok")))
    body = gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client, sleep=sleeps.append)
    assert gw.completion_text(body) == "ok"
    assert len(sleeps) == 2


def test_backoff_doubles():
    cfg = gw.ProviderConfig(endpoint="https://models.invalid/x", model="m", backoff=0.5)
    sleeps = []
    client = mock_client(httpx.Response(503), httpx.Response(503), httpx.Response(503))
    with pytest.raises(gw.ProviderError):
        gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client, sleep=sleeps.append)
    assert sleeps == [0.5, 1.0]


def test_transport_failure_exhausts_attempts(cfg):
    seen = []
    err = httpx.ConnectError("refused")
    client = mock_client(err, err, err, seen=seen)
    with pytest.raises(gw.TransportError):
        gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client, sleep=lambda s: None)
    assert len(seen) == 3


@pytest.mark.parametrize("status", [401, 403])
def test_authentication_failure_is_not_retried(cfg, status):
    seen = []
    client = mock_client(httpx.Response(status), seen=seen)
    with pytest.raises(gw.AuthenticationError):
        gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client)
    assert len(seen) == 1


def test_error_payload(cfg):
    client = mock_client(httpx.Response(200, json={"error": {"message": "model overloaded"}}))
    with pytest.raises(gw.ProviderError, match="overloaded"):
        gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client)


def test_client_error_status(cfg):
    client = mock_client(httpx.Response(400, text="bad request"))
    with pytest.raises(gw.ProviderError):
        gw.request_parse(cfg, gw.build_solve_prompt(PROBLEM), client=client)


def test_image_is_inlined(tmp_path, cfg):
    img = tmp_path / "fig.png"
    img.write_bytes(b"\x89PNG fake")
    body = gw.request_body(cfg, gw.build_solve_prompt(gw.ProblemInput("t", str(img))))
    part = body["messages"][0]["content"][1]
    assert part["image_url"]["url"].startswith("data:image/png;base64,")


def test_unknown_config_key():
    with pytest.raises(ValueError, match="unknown"):
        gw.ProviderConfig.from_dict({"endpoint": "e", "model": "m", "temperature": 0})
