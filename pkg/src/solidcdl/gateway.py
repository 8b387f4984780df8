"""Prompts for external multimodal models, the provider HTTP client, and
validation of the CDL documents they return.

Only :func:`request_parse` touches the network.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .cdl import (Atom, Attr, CDLSyntaxError, Equation, Not, Op, UnknownOperatorError,
                  ValueGoal, attr_terms, parse_answer, parse_fact, render_fact)
from .knowledge import KnowledgeBase, UnknownPredicateError
from .problem import MalformedProblemError, ProblemCDL, check_schema

log = logging.getLogger(__name__)

SAMPLE_COUNTS = (15, 25, 35, 45)
FINAL_ANSWER = "FINAL ANSWER: "
DESIGNED_EXAMPLES = Path(__file__).parent / "data" / "designed_examples.json"
DEFAULT_KEY_ENV = "SOLIDCDL_API_KEY"

# violation kinds, keyed to the prompt rule they enforce
ILLEGAL_PREDICATE = "illegal predicate"         # rule 0 / 5
MISPLACED_FACT = "misplaced fact"               # rule 1
MISPLACED_PREDICATE = "misplaced predicate"     # rule 2
ANSWER_NOT_PURE = "answer contains units"       # rule 3
GOAL_NOT_VALUE = "goal not Value-wrapped"       # rule 4
ILLEGAL_OPERATOR = "illegal operator"           # rule 5
WHITESPACE = "whitespace violation"             # rule 5
UNDECLARED_ENTITY = "undeclared entity"         # rule 6
SYNTAX_ERROR = "syntax error"

RULE_OF = {ILLEGAL_PREDICATE: 0, MISPLACED_FACT: 1, MISPLACED_PREDICATE: 2, ANSWER_NOT_PURE: 3,
           GOAL_NOT_VALUE: 4, ILLEGAL_OPERATOR: 5, WHITESPACE: 5, UNDECLARED_ENTITY: 6,
           SYNTAX_ERROR: 5}


class MalformedOutputError(ValueError):
    """The model output is not a CDL document at all."""


class MissingMarkerError(ValueError):
    pass


class SampleCountError(ValueError):
    pass


class ProviderError(RuntimeError):
    pass


class AuthenticationError(ProviderError):
    pass


class TransportError(ProviderError):
    pass


# --------------------------------------------------------------------------
# prompt templates

PARSE_PREAMBLE = (
    "You are an expert in geometry, logic, and computer science. Your task is to precisely "
    "convert a geometry problem (with natural language and an image) into a JSON object "
    "following the provided JSON Schema. You must strictly follow the schema and output a "
    "complete JSON object."
)

PARSE_RULE_ZERO = """Rule 0: Predicate Compliance (MOST IMPORTANT)
- All CDL predicates you generate (e.g., Equal, Cone, LengthOfLine) MUST be strictly chosen from the official list below.
- Using any predicate that does not appear in this list is strictly forbidden."""

PARSE_RULES = """Core Rules and Constraints:

1) Information Source Separation:
   - text_cdl MUST include only facts extracted from the natural language description.
   - image_cdl MUST include only facts directly observable from the image (e.g., length labels, right-angle marks, shape recognition).
   - If a fact appears in both text and image, include it in both fields.

2) construction_cdl - Geometric construction predicates (IMPORTANT):
   construction_cdl defines basic construction for entities, and MUST include the following types where applicable:
   - Shape predicates: define edges/segments of shapes
     * For segments/edges: Shape(AB,BC,CD,DA) or Shape(OP,PO) or Shape(PQ,QP)
     * For points (spheres etc.): Shape(O) or Shape(P)
     * Example: rectangles require Shape(AB,BC,CD,DA); cylinders require Shape(PQ,QP)
   - Collinearity/Cocircular/Coplanar/Cospherical:
     * Collinear(PABQ) - P, A, B, Q are collinear
     * Cocircular(O) - O is on a circle (for cone/cylinder base center)
     * Coplanar(U,ABCD) - U coplanar with ABCD
     * Cospherical(O) - O is on a sphere (for spheres)
   Important:
   - Carefully analyze the image to identify all necessary edges/segments/relations
   - Most problems require at least one Shape(...)
   - Cones/cylinders often need Shape(...) and Cocircular(...)
   - Spheres often need Shape(O) and Cospherical(O)

3) Answer formatting:
   - problem_answer MUST be a pure number or expression (e.g., "10", "36*pi"), and MUST NOT contain units or extra text.

4) Core predicate logic:
   - Length/Height: Equal(LengthOfLine(A,B),5), Equal(HeightOfCone(O,P),12)
   - Relations: PerpendicularBetweenLine(A,B,C,D), ParallelBetweenLine(A,B,C,D)
   - Goal: the requested quantity MUST be wrapped by Value(...).

5) Predicate and Operator Legality (CRITICAL):
   - Only reuse names from the official predicate list; DO NOT invent new construction predicates.
   - Quantities allowed in CDL expressions are LIMITED to standard forms: VolumeOfCone, SurfaceAreaOfCylinder, AreaOfCircle, LengthOfLine, etc.
   - Only the following algebraic operators are allowed: Value, Add, Sub, Mul, Div.
   - Formatting: NO extra spaces inside any predicate/operator.

6) Completeness Checks:
   - Ensure every entity used by text_cdl/image_cdl exists in construction_cdl
   - Ensure the target entity in goal_cdl exists in the construction as well
   - Self-check after generation: verify all predicates/operators are allowed, no extra spaces, and no undeclared entities are referenced.

Important: Output Requirements
1. You MUST output a complete JSON object with all required fields
2. All CDL fields MUST be arrays of strings
3. goal_cdl MUST be a string (e.g., "Value(VolumeOfCone(O,P))")"""

SOLVE_PROMPT = """You are an expert in geometry and mathematics. Please solve the following geometry problem step by step.

Important Instructions:
1. Carefully analyze the problem text and the accompanying image
2. Show your reasoning process step by step
3. At the end, provide your final answer in a clear format
4. **Your final answer should be ONLY a number or mathematical expression (like "10", "5.5", "12*pi", "36*pi"), without any units or text**
5. Put your final answer on a line starting with "FINAL ANSWER: "

Example format:
FINAL ANSWER: 10

or

FINAL ANSWER: 36*pi

Now, please solve this problem:"""

OUTPUT_SCHEMA = {
    "type": "object",
    "required": ["construction_cdl", "text_cdl", "image_cdl", "goal_cdl", "problem_answer"],
    "properties": {
        "construction_cdl": {"type": "array", "items": {"type": "string"}},
        "text_cdl": {"type": "array", "items": {"type": "string"}},
        "image_cdl": {"type": "array", "items": {"type": "string"}},
        "goal_cdl": {"type": "string"},
        "problem_answer": {"type": "string"},
    },
}


@dataclass(frozen=True)
class ProblemInput:
    text: str
    image: str | None = None        # file path or URL


@dataclass(frozen=True)
class PromptBundle:
    preamble: str
    predicate_list: str
    examples: tuple                 # rendered example blocks
    rules: str
    problem: ProblemInput
    warnings: tuple = ()
    kind: str = "parse"

    @property
    def sample_count(self) -> int:
        return len(self.examples)

    def render(self) -> str:
        """The full text prompt (the image travels separately)."""
        if self.kind == "solve":
            return f"{self.preamble}\n\n{self.problem.text}"
        parts = [self.preamble, "", PARSE_RULE_ZERO, "",
                 "--- Official Predicate List ---", self.predicate_list,
                 "--- End of Official Predicate List ---", "", self.rules, "",
                 "JSON Schema:", json.dumps(OUTPUT_SCHEMA, indent=2, sort_keys=True)]
        if self.examples:
            parts += ["", f"--- Examples ({len(self.examples)}) ---"]
            for i, ex in enumerate(self.examples, 1):
                parts += [f"Example {i}:", ex]
            parts.append("--- End of Examples ---")
        parts += ["", "Problem:", self.problem.text]
        if self.problem.image:
            parts.append(f"Image: {Path(self.problem.image).name}")
        return "\n".join(parts)

    def to_bytes(self) -> bytes:
        return self.render().encode("utf-8")


def predicate_list(kb: KnowledgeBase) -> str:
    """One predicate signature per line, in library order."""
    return "\n".join(kb.predicate(n).signature for n in kb.predicate_names())


def load_designed_examples(path=None) -> list[dict]:
    doc = json.loads(Path(path or DESIGNED_EXAMPLES).read_text(encoding="utf-8"))
    return doc["examples"] if isinstance(doc, dict) else doc


def select_samples(n: int, examples: list[dict] | None = None) -> list[dict]:
    """The first ``n`` designed examples."""
    examples = load_designed_examples() if examples is None else examples
    if n > len(examples):
        raise SampleCountError(f"asked for {n} samples, only {len(examples)} available")
    return examples[:n]


def _render_example(ex: dict) -> str:
    doc = {k: ex["cdl"][k] for k in OUTPUT_SCHEMA["required"]}
    return f"Problem: {ex['text']}\nOutput: {json.dumps(doc, ensure_ascii=False)}"


def build_parse_prompt(samples: list[dict], kb: KnowledgeBase, problem: ProblemInput,
                       allow_any_count: bool = False) -> PromptBundle:
    """Deterministic parsing prompt with ``samples`` as worked examples.

    The sample count must be one of 15, 25, 35 or 45 unless
    ``allow_any_count`` is set, in which case a warning is attached.
    """
    n = len(samples)
    warnings = []
    if n not in SAMPLE_COUNTS:
        if not allow_any_count:
            raise SampleCountError(f"sample count {n} not in {SAMPLE_COUNTS}")
        msg = f"sample count {n} is outside the standard gradients {SAMPLE_COUNTS}"
        log.warning(msg)
        warnings.append(msg)
    return PromptBundle(PARSE_PREAMBLE, predicate_list(kb),
                        tuple(_render_example(s) for s in samples), PARSE_RULES, problem,
                        tuple(warnings))


def build_solve_prompt(problem: ProblemInput) -> PromptBundle:
    return PromptBundle(SOLVE_PROMPT, "", (), "", problem, kind="solve")


# --------------------------------------------------------------------------
# output validation


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    field: str = ""

    @property
    def rule(self) -> int:
        return RULE_OF[self.kind]

    def as_dict(self) -> dict:
        return {"kind": self.kind, "rule": self.rule, "field": self.field, "detail": self.detail}

    def __str__(self) -> str:
        where = f"{self.field}: " if self.field else ""
        return f"{self.kind} (rule {self.rule}): {where}{self.detail}"


@dataclass
class ModelOutputReport:
    document: dict
    problem: ProblemCDL | None = None
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and self.problem is not None

    @property
    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def as_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.as_dict() for v in self.violations],
                "cdl": self.problem.to_dict() if self.problem else None}

    def render(self) -> str:
        if self.ok:
            return "valid CDL document"
        return "\n".join(str(v) for v in self.violations)


def extract_cdl_document(raw) -> dict:
    """The JSON object in a completion (fenced or bare); raises MalformedOutputError."""
    if isinstance(raw, dict):
        return raw
    if not isinstance(raw, str):
        raise MalformedOutputError("model output is neither text nor an object")
    fenced = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", raw, re.S)
    candidates = [fenced.group(1)] if fenced else []
    start, end = raw.find("{"), raw.rfind("}")
    if start >= 0 and end > start:
        candidates.append(raw[start:end + 1])
    for text in candidates:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(doc, dict):
            return doc
    raise MalformedOutputError("no JSON object found in model output")


def _names(fact) -> tuple[list[str], list[str]]:
    """(atom predicate names, attribute names) used by a fact."""
    if isinstance(fact, Not):
        fact = fact.atom
    if isinstance(fact, Atom):
        return [fact.name], []
    exprs = [fact.lhs, fact.rhs] if isinstance(fact, Equation) else [fact.expr]
    return [], [t.name for e in exprs for t in attr_terms(e) if isinstance(t, Attr)]


def _entity_checks(fact, kb: KnowledgeBase, depth: int = 0) -> list[Atom]:
    """Construction and basic-entity atoms a fact presupposes."""
    out = []
    for c in kb.checks_for(fact):
        kind = kb.predicate(c.name).kind
        if kind in ("Construction", "BasicEntity"):
            out.append(c)
        elif depth < 4:
            out += _entity_checks(c, kb, depth + 1)
    return out


def validate_model_output(raw, kb: KnowledgeBase) -> ModelOutputReport:
    """Check schema, vocabulary, operators, formatting, answer and entity closure.

    Raises :class:`MalformedOutputError` for documents that are not CDL
    documents; everything else is reported as violations.
    """
    from .engine.store import ConditionStore, Provenance

    doc = extract_cdl_document(raw)
    missing = [k for k in OUTPUT_SCHEMA["required"] if k not in doc]
    if missing:
        raise MalformedOutputError(f"missing fields: {', '.join(missing)}")
    try:
        check_schema(doc)
    except MalformedProblemError as exc:
        raise MalformedOutputError(str(exc)) from None

    report = ModelOutputReport(doc)
    add = report.violations.append
    parsed: dict[str, list] = {}

    def parse_field(key, texts):
        facts = []
        for s in texts:
            if re.search(r"\s", s.strip()):
                add(Violation(WHITESPACE, f"{s!r} contains whitespace", key))
            try:
                f = parse_fact(s)
            except UnknownOperatorError as exc:
                add(Violation(ILLEGAL_OPERATOR, str(exc).splitlines()[0], key))
                continue
            except CDLSyntaxError as exc:
                add(Violation(SYNTAX_ERROR, str(exc).splitlines()[0], key))
                continue
            preds, attrs = _names(f)
            if (key == "goal_cdl" and isinstance(f, Atom) and kb.has_predicate(f.name)
                    and kb.predicate(f.name).kind == "Attribution"):
                add(Violation(GOAL_NOT_VALUE, f"{s} is not wrapped by Value(...)", key))
                continue
            bad = False
            for n in preds:
                if not kb.has_predicate(n) or kb.predicate(n).kind == "Attribution":
                    add(Violation(ILLEGAL_PREDICATE, f"illegal predicate {n}", key))
                    bad = True
            for n in attrs:
                if not kb.has_predicate(n) or kb.predicate(n).kind != "Attribution":
                    add(Violation(ILLEGAL_PREDICATE, f"illegal predicate {n}", key))
                    bad = True
            if not bad:
                try:
                    f = kb.normalize(f)
                except (UnknownPredicateError, ValueError) as exc:
                    add(Violation(SYNTAX_ERROR, f"{s}: {exc}", key))
                    continue
                facts.append((s, f))
        parsed[key] = facts

    for key in ("construction_cdl", "text_cdl", "image_cdl"):
        parse_field(key, doc.get(key) or [])
    goal_text = doc.get("goal_cdl") or ""
    if goal_text.strip():
        parse_field("goal_cdl", [goal_text])
    else:
        add(Violation(GOAL_NOT_VALUE, "goal_cdl is empty", "goal_cdl"))

    # rule 2: construction_cdl holds construction predicates only
    for s, f in parsed["construction_cdl"]:
        if not (isinstance(f, Atom) and kb.predicate(f.name).kind == "Construction"):
            add(Violation(MISPLACED_PREDICATE, f"{s} is not a construction predicate",
                          "construction_cdl"))
    # rule 1: text and image carry facts about the figure, not construction or goals
    for key in ("text_cdl", "image_cdl"):
        for s, f in parsed[key]:
            if isinstance(f, ValueGoal):
                add(Violation(MISPLACED_FACT, f"{s} is a goal, not a fact", key))
            elif isinstance(f, Atom) and kb.predicate(f.name).kind == "Construction":
                add(Violation(MISPLACED_FACT, f"{s} belongs in construction_cdl", key))
            elif isinstance(f, Not):
                add(Violation(MISPLACED_FACT, f"{s}: negation is not allowed in a problem", key))
    # rule 4: goal shape
    for s, f in parsed.get("goal_cdl", []):
        is_relation = isinstance(f, Atom) and kb.predicate(f.name).kind == "Relation"
        if not isinstance(f, ValueGoal) and not is_relation:
            add(Violation(GOAL_NOT_VALUE, f"{s} is not wrapped by Value(...)", "goal_cdl"))
        elif isinstance(f, ValueGoal) and isinstance(f.expr, Op) and f.expr.op == "Value":
            add(Violation(GOAL_NOT_VALUE, f"{s} nests Value", "goal_cdl"))
    # rule 3: answer purity
    answer = str(doc.get("problem_answer", "")).strip()
    goal_is_relation = any(isinstance(f, Atom) for _, f in parsed.get("goal_cdl", []))
    if not (goal_is_relation and answer == "True"):
        try:
            parse_answer(answer)
        except (CDLSyntaxError, ArithmeticError, LookupError) as exc:
            add(Violation(ANSWER_NOT_PURE, f"{answer!r}: {str(exc).splitlines()[0]}",
                          "problem_answer"))
    # rule 6: everything used later is declared by the construction
    store = ConditionStore(kb)
    for _, f in parsed["construction_cdl"]:
        if isinstance(f, Atom):
            store.add(f, Provenance("given"))
    declared = set(store.points()) | set(store.planes) | set(store.spheres) | set(store.circles)
    for key in ("text_cdl", "image_cdl", "goal_cdl"):
        for s, f in parsed.get(key, []):
            try:
                needed = _entity_checks(f, kb)
            except (UnknownPredicateError, ValueError):
                continue
            for c in needed:
                if c.name == "Point" and c.args[0] in declared:
                    continue
                if not store.holds(c):
                    add(Violation(UNDECLARED_ENTITY, f"{s} needs {render_fact(c)}", key))
                    break

    if not report.violations:
        report.problem = ProblemCDL.from_dict(doc)
    return report


def extract_final_answer(raw_completion: str):
    """Exact value on the last line that starts with the final-answer marker."""
    marker = FINAL_ANSWER.strip()
    lines = [ln.strip() for ln in raw_completion.splitlines()]
    hits = [ln for ln in lines if ln.upper().startswith(marker)]
    if not hits:
        raise MissingMarkerError(f"no line starts with {marker!r}")
    text = hits[-1][len(marker):].strip().strip("`*$ ").rstrip(".")
    return parse_answer(text)


# --------------------------------------------------------------------------
# provider client


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model: str
    api_key_env: str = DEFAULT_KEY_ENV
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    timeout: float = 120.0
    max_attempts: int = 3
    backoff: float = 1.0
    max_concurrency: int = 4
    image_mode: str = "base64"          # or "url"
    headers: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> ProviderConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown provider config keys: {', '.join(sorted(unknown))}")
        if "endpoint" not in d or "model" not in d:
            raise ValueError("provider config needs endpoint and model")
        return cls(**d)

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)


def load_provider_config(path) -> ProviderConfig:
    return ProviderConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_SEMAPHORES: dict = {}
_SEM_LOCK = threading.Lock()


def _semaphore(cfg: ProviderConfig) -> threading.BoundedSemaphore:
    key = (cfg.endpoint, cfg.max_concurrency)
    with _SEM_LOCK:
        if key not in _SEMAPHORES:
            _SEMAPHORES[key] = threading.BoundedSemaphore(max(1, cfg.max_concurrency))
        return _SEMAPHORES[key]


def _image_part(cfg: ProviderConfig, image: str) -> dict:
    if cfg.image_mode == "url" or re.match(r"^https?://", image):
        url = image
    else:
        mime = mimetypes.guess_type(image)[0] or "image/png"
        data = base64.b64encode(Path(image).read_bytes()).decode("ascii")
        url = f"data:{mime};base64,{data}"
    return {"type": "image_url", "image_url": {"url": url}}


def request_body(cfg: ProviderConfig, bundle: PromptBundle) -> dict:
    content = [{"type": "text", "text": bundle.render()}]
    if bundle.problem.image:
        content.append(_image_part(cfg, bundle.problem.image))
    return {"model": cfg.model, "messages": [{"role": "user", "content": content}]}


def request_parse(cfg: ProviderConfig, bundle: PromptBundle,
                  client: httpx.Client | None = None, sleep=time.sleep) -> str:
    """POST the bundle to the provider and return the response body text.

    Transient failures (transport errors, 429, 5xx) are retried with
    exponential backoff up to ``cfg.max_attempts`` attempts.  401/403 raise
    :class:`AuthenticationError`; other errors raise :class:`ProviderError`.
    """
    headers = {"Content-Type": "application/json", **cfg.headers}
    key = cfg.api_key()
    if key:
        headers[cfg.auth_header] = f"{cfg.auth_scheme} {key}".strip()
    body = request_body(cfg, bundle)
    own = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    last = None
    try:
        with _semaphore(cfg):
            for attempt in range(cfg.max_attempts):
                if attempt:
                    sleep(cfg.backoff * 2 ** (attempt - 1))
                try:
                    resp = client.post(cfg.endpoint, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last = TransportError(f"transport failure: {exc}")
                    continue
                if resp.status_code in (401, 403):
                    raise AuthenticationError(f"provider rejected credentials ({resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = ProviderError(f"provider returned {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(f"provider returned {resp.status_code}: {resp.text[:200]}")
                text = resp.text
                try:
                    payload = json.loads(text)
                except json.JSONDecodeError:
                    return text
                if isinstance(payload, dict) and payload.get("error"):
                    raise ProviderError(f"provider error: {payload['error']}")
                return text
    finally:
        if own:
            client.close()
    raise last


def completion_text(body: str) -> str:
    """Message content of a chat-completions response, or the body itself."""
    try:
        payload = json.loads(body)
    except json.JSONDecodeError:
        return body
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        return body
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return content
