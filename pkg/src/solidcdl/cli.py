"""Command-line entry point: ``solidcdl <command> ...``.

Exit codes (stable, see :class:`ExitCode`)::

    0  solved / success          12  invalid problem
    2  usage error               13  knowledge-base load error
   10  unsolved                  14  model output violations
   11  contradiction             15  provider or transport failure
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from enum import IntEnum
from pathlib import Path

from . import gateway
from .cdl import CDLSyntaxError
from .engine import (Contradiction, ContradictionError, InvalidProblemError, SolutionTrace,
                     SolveLimits, replay_trace, search)
from .knowledge import GDLError, KnowledgeBase, default_gdl_paths, load_knowledge_base
from .metrics import score_corpus
from .problem import MalformedProblemError, ProblemRecord, load_record
from .runner import ENVELOPE_SECONDS, ENVELOPE_STEPS, answer_matches, batch_solve

log = logging.getLogger("solidcdl")


class ExitCode(IntEnum):
    SOLVED = 0
    USAGE = 2
    UNSOLVED = 10
    CONTRADICTION = 11
    INVALID_PROBLEM = 12
    KB_ERROR = 13
    VIOLATIONS = 14
    PROVIDER_ERROR = 15


class CommandError(Exception):
    def __init__(self, message: str, code: ExitCode):
        super().__init__(message)
        self.code = code


def _emit(args, structured: dict, text: str) -> None:
    if args.output == "structured":
        print(json.dumps(structured, indent=2, sort_keys=True))
    else:
        print(text)


def _kb_paths(args) -> tuple[str, str]:
    preds, thms = default_gdl_paths()
    return (args.kb_predicates or str(preds), args.kb_theorems or str(thms))


def _load_kb(args) -> KnowledgeBase:
    try:
        return load_knowledge_base(*_kb_paths(args))
    except (GDLError, OSError) as exc:
        raise CommandError(f"knowledge base error: {exc}", ExitCode.KB_ERROR) from None


def _limits(args) -> SolveLimits:
    try:
        return SolveLimits(args.time_limit, args.step_cap, args.traversal)
    except ValueError as exc:
        raise CommandError(str(exc), ExitCode.USAGE) from None


def _read_record(path) -> ProblemRecord:
    try:
        return load_record(path)
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}", ExitCode.USAGE) from None
    except (MalformedProblemError, CDLSyntaxError) as exc:
        raise CommandError(f"invalid problem: {exc}", ExitCode.INVALID_PROBLEM) from None


def _solve_and_report(args, problem, kb, reference: str = "") -> ExitCode:
    try:
        result = search(problem, kb, _limits(args))
    except InvalidProblemError as exc:
        raise CommandError(f"invalid problem: {exc}", ExitCode.INVALID_PROBLEM) from None
    except ContradictionError as exc:
        result = exc.contradiction
    if isinstance(result, SolutionTrace):
        doc = {"status": "solved", **result.to_dict()}
        text = result.render_text()
        if args.verify:
            replay = replay_trace(result, problem, kb)
            doc["replay"] = replay.to_dict()
            text += "\n" + replay.render_text()
        if reference:
            doc["answer_matches"] = answer_matches(result.value, reference)
        code = ExitCode.SOLVED
    elif isinstance(result, Contradiction):
        doc, text, code = result.to_dict(), result.render(), ExitCode.CONTRADICTION
    else:
        doc = {"status": "unsolved", **result.to_dict()}
        text, code = result.render_text(), ExitCode.UNSOLVED
    if args.trace_out:
        Path(args.trace_out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    _emit(args, doc, text)
    return code


# --------------------------------------------------------------------------
# commands


def cmd_validate_kb(args) -> ExitCode:
    try:
        kb = load_knowledge_base(*_kb_paths(args))
    except (GDLError, OSError) as exc:
        _emit(args, {"ok": False, "error": str(exc)}, f"error: {exc}")
        return ExitCode.KB_ERROR
    _emit(args, {"ok": True, **kb.report.as_dict()}, kb.report.render())
    return ExitCode.SOLVED


def cmd_solve(args) -> ExitCode:
    kb = _load_kb(args)
    record = _read_record(args.problem)
    try:
        problem = record.problem
    except (MalformedProblemError, CDLSyntaxError) as exc:
        raise CommandError(f"invalid problem: {exc}", ExitCode.INVALID_PROBLEM) from None
    return _solve_and_report(args, problem, kb, record.answer)


def cmd_batch_solve(args) -> ExitCode:
    if not Path(args.corpus).is_dir():
        raise CommandError(f"{args.corpus} is not a directory", ExitCode.USAGE)
    _load_kb(args)      # fail fast on a broken knowledge base
    report = batch_solve(args.corpus, _kb_paths(args), _limits(args), args.parallel,
                         args.envelope_steps, args.envelope_time)
    if args.report_out:
        Path(args.report_out).write_text(
            json.dumps(report.to_dict(timing=not args.no_timing), indent=2, sort_keys=True)
            + "\n", encoding="utf-8")
    _emit(args, report.to_dict(timing=not args.no_timing), report.render_text())
    if not report.envelope_ok:
        print(f"warning: fewer than 80% of solved problems finished within "
              f"{args.envelope_steps} steps / {args.envelope_time}s", file=sys.stderr)
    return ExitCode.SOLVED if all(o.matched for o in report.outcomes) else ExitCode.UNSOLVED


def _read_documents(path) -> dict:
    """id -> CDL document, from a directory of records, a JSON object or a list."""
    path = Path(path)
    if path.is_dir():
        out = {}
        for f in sorted(path.glob("*.json")):
            rec = load_record(f)
            if rec.cdl is not None:
                out[rec.id] = rec.cdl
        return out
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, list):
        return {ProblemRecord.from_dict(d).id: ProblemRecord.from_dict(d).cdl for d in doc}
    if isinstance(doc, dict) and "construction_cdl" in doc:
        return {path.stem: doc}
    if isinstance(doc, dict):
        return {k: (v.get("cdl", v) if isinstance(v, dict) else v) for k, v in doc.items()}
    raise MalformedProblemError(f"{path.name}: expected an object or a list")


def cmd_score(args) -> ExitCode:
    try:
        preds = _read_documents(args.predictions)
        truth = _read_documents(args.ground_truth)
    except OSError as exc:
        raise CommandError(str(exc), ExitCode.USAGE) from None
    except (ValueError, MalformedProblemError) as exc:
        raise CommandError(f"invalid document: {exc}", ExitCode.INVALID_PROBLEM) from None
    table = score_corpus(preds, truth)
    _emit(args, table.as_dict(), table.render())
    return ExitCode.SOLVED


def cmd_parse(args, http_client=None) -> ExitCode:
    kb = _load_kb(args)
    record = _read_record(args.problem)
    if not args.provider_config:
        raise CommandError("parse needs --provider-config", ExitCode.USAGE)
    image = record.image
    if image and record.source and not Path(image).is_absolute() and "://" not in image:
        image = str(Path(record.source).parent / image)
    try:
        cfg = gateway.load_provider_config(args.provider_config)
        samples = gateway.select_samples(args.samples)
        bundle = gateway.build_parse_prompt(samples, kb,
                                            gateway.ProblemInput(record.text, image),
                                            allow_any_count=args.allow_any_samples)
    except (OSError, ValueError) as exc:
        raise CommandError(str(exc), ExitCode.USAGE) from None
    try:
        body = gateway.request_parse(cfg, bundle, client=http_client)
    except gateway.ProviderError as exc:
        raise CommandError(str(exc), ExitCode.PROVIDER_ERROR) from None
    try:
        report = gateway.validate_model_output(gateway.completion_text(body), kb)
    except gateway.MalformedOutputError as exc:
        _emit(args, {"ok": False, "error": str(exc)}, f"malformed model output: {exc}")
        return ExitCode.VIOLATIONS
    if args.cdl_out and report.ok:
        Path(args.cdl_out).write_text(json.dumps(report.problem.to_dict(), indent=2) + "\n",
                                      encoding="utf-8")
    if not report.ok:
        _emit(args, report.as_dict(), report.render())
        return ExitCode.VIOLATIONS
    if not args.then_solve:
        _emit(args, report.as_dict(), json.dumps(report.problem.to_dict(), indent=2))
        return ExitCode.SOLVED
    return _solve_and_report(args, report.problem, kb, record.answer)


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kb-predicates", help="predicate GDL file (default: shipped)")
    common.add_argument("--kb-theorems", help="theorem GDL file (default: shipped)")
    common.add_argument("--output", choices=("text", "structured"), default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    limits = argparse.ArgumentParser(add_help=False)
    limits.add_argument("--time-limit", type=float, default=300.0, help="seconds per problem")
    limits.add_argument("--step-cap", type=int, default=10_000)
    limits.add_argument("--traversal", choices=("bfs", "dfs"), default="bfs")

    solving = argparse.ArgumentParser(add_help=False)
    solving.add_argument("--trace-out", help="write the result document here")
    solving.add_argument("--verify", action="store_true", help="replay the trace")

    p = argparse.ArgumentParser(prog="solidcdl", description="Formal solid-geometry solver.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate-kb", parents=[common], help="load and summarise GDL files")
    s.set_defaults(func=cmd_validate_kb)

    s = sub.add_parser("solve", parents=[common, limits, solving], help="solve one problem")
    s.add_argument("problem", help="problem record or bare CDL document (JSON)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("batch-solve", parents=[common, limits], help="solve a corpus directory")
    s.add_argument("corpus")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--envelope-steps", type=int, default=ENVELOPE_STEPS)
    s.add_argument("--envelope-time", type=float, default=ENVELOPE_SECONDS)
    s.add_argument("--report-out", help="write the structured report here")
    s.add_argument("--no-timing", action="store_true", help="omit wall times from the report")
    s.set_defaults(func=cmd_batch_solve)

    s = sub.add_parser("score", parents=[common], help="fuzzy-Jaccard parse scores")
    s.add_argument("predictions")
    s.add_argument("ground_truth")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("parse", parents=[common, limits, solving],
                       help="parse a problem with an external model")
    s.add_argument("problem", help="problem record with text and image")
    s.add_argument("--provider-config")
    s.add_argument("--samples", type=int, default=45)
    s.add_argument("--allow-any-samples", action="store_true",
                   help="accept a sample count outside 15/25/35/45 (with a warning)")
    s.add_argument("--cdl-out", help="write the validated CDL document here")
    s.add_argument("--then-solve", action="store_true")
    s.set_defaults(func=cmd_parse)
    return p


def main(argv=None, *, http_client=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ExitCode.USAGE if exc.code else ExitCode.SOLVED
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.func is cmd_parse:
            return int(cmd_parse(args, http_client))
        return int(args.func(args))
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(exc.code)


if __name__ == "__main__":
    sys.exit(main())
