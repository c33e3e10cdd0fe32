"""Command-line front end: ``mpst <subcommand> FILE ...``.

Exit status 0 means the operation succeeded or the property holds, 1 that a
check failed (details on stdout), 2 a usage, parse or resource error (a JSON
object on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Callable

from . import __version__
from .analysis import (
    check_all_by_association, check_association, check_completeness_correspondence, check_properties,
    check_soundness_correspondence,
)
from .core import Context, IllFormed, is_basic, parse_label
from .lts import LimitExceeded, global_graph, reachable_contexts, replay
from .picalc import DynamicFault, run
from .projection import MergeFailure, project, project_all, ProjectionUndefined
from .schemas import SCHEMAS
from .subtyping import subtype
from .surface import (
    ParseError, SourceFile, declaration_diagnostics, parse, parse_context, parse_global, parse_process,
    parse_sort, pretty,
)
from .typesystem import (
    PremiseViolation, ProcessTypeError, session_fidelity_harness, subject_reduction_harness, typecheck,
    typed_process_properties,
)


class UsageError(Exception):
    pass


class Outcome:
    """What a subcommand produced: a JSON document, its text rendering, and
    whether the checked property holds."""

    def __init__(self, doc: dict, text: str, ok: bool = True, dot: str | None = None):
        self.doc = doc
        self.text = text
        self.ok = ok
        self.dot = dot


def _load(path: str) -> SourceFile:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    return parse(data)


def _named(sf: SourceFile, name: str, kind: str, inline: Callable | None = None):
    """A declaration of ``kind`` called ``name``, or ``name`` parsed as inline text."""
    try:
        return sf.get(name, kind)
    except KeyError:
        if inline is None:
            raise UsageError(f"no {kind} declaration named {name!r}") from None
    return inline(name, sf)


def _sort(sf: SourceFile, text: str):
    for kind in ("local", "global"):
        try:
            return sf.get(text, kind)
        except KeyError:
            pass
    return parse_sort(text, sf)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_check(sf: SourceFile, args) -> Outcome:
    decls = [{"name": d.name, "kind": d.kind, "line": d.line, "column": d.column} for d in sf.decls]
    diags = []
    for d in sf.decls:
        for diag in declaration_diagnostics(d):
            diags.append({"line": d.line, "column": d.column, "name": d.name, "kind": diag.kind,
                          "message": diag.message, "path": list(diag.path)})
    doc = {"ok": not diags, "declarations": decls, "diagnostics": diags}
    lines = [f"{x['line']}:{x['column']} {x['name']}: {x['kind']} {x['message']}" for x in diags]
    lines.append(f"{len(decls)} declarations, {len(diags)} diagnostics")
    return Outcome(doc, "\n".join(lines), not diags)


def cmd_project(sf: SourceFile, args) -> Outcome:
    g = _named(sf, args.global_, "global", parse_global)
    failures, projections = [], {}
    try:
        if args.role:
            projections[args.role] = pretty(project(g, args.role))
        else:
            projections = {r: pretty(t) for r, t in project_all(g).items()}
    except MergeFailure as e:
        failures = [e.to_json()]
    except ProjectionUndefined as e:
        failures = [f.to_json() for _, f in sorted(e.failures.items())]
    doc = {"global": pretty(g), "projections": projections, "failures": failures}
    lines = [f"{r}: {t}" for r, t in projections.items()]
    lines += [f"{f['role']}: {f['reason']} at {'/'.join(f['path']) or '<root>'}: {f['detail']}" for f in failures]
    return Outcome(doc, "\n".join(lines), not failures)


def cmd_subtype(sf: SourceFile, args) -> Outcome:
    left, right = _sort(sf, args.left), _sort(sf, args.right)
    holds = subtype(left, right)
    show = lambda s: s.value if is_basic(s) else pretty(s)
    doc = {"left": show(left), "right": show(right), "holds": holds}
    return Outcome(doc, "true" if holds else "false", holds)


def _dot(nodes: list[str], edges: list[tuple[int, str, int]], name: str) -> str:
    out = [f"digraph {json.dumps(name)} {{", "  rankdir=LR;"]
    for i, label in enumerate(nodes):
        out.append(f"  n{i} [label={json.dumps(label)}];")
    for a, lab, b in edges:
        out.append(f"  n{a} -> n{b} [label={json.dumps(lab)}];")
    out.append("}")
    return "\n".join(out)


def cmd_simulate(sf: SourceFile, args) -> Outcome:
    if bool(args.global_) == bool(args.context):
        raise UsageError("give exactly one of --global and --context")
    if args.global_:
        g = _named(sf, args.global_, "global", parse_global)
        nodes, edges = global_graph(g, args.session, args.steps)
        shown = [pretty(n) for n in nodes]
        doc = {"kind": "global",
               "nodes": [{"id": i, "state": t} for i, t in enumerate(shown)],
               "edges": [{"from": a, "label": str(l), "to": b} for a, l, b in edges]}
    else:
        ctx = _named(sf, args.context, "context", parse_context)
        if args.replay:
            try:
                ctx = replay(ctx, [parse_label(x) for x in args.replay.replace(",", " ").split()], args.session)
            except ValueError as e:
                raise UsageError(f"cannot replay: {e}") from None
        graph = reachable_contexts(ctx, args.session, args.limit)
        shown = [pretty(n) for n in graph.nodes]
        doc = {"kind": "context",
               "nodes": [{"id": i, "state": t, "trace": [str(l) for l in graph.trace_to(i)]}
                         for i, t in enumerate(shown)],
               "edges": [{"from": a, "label": str(l), "to": b} for a, l, b in graph.edges]}
    text = [f"[{n['id']}] {n['state']}" for n in doc["nodes"]]
    text += [f"{e['from']} --{e['label']}--> {e['to']}" for e in doc["edges"]]
    dot = _dot(shown, [(e["from"], e["label"], e["to"]) for e in doc["edges"]], doc["kind"])
    return Outcome(doc, "\n".join(text), True, dot)


def _assoc_text(doc: dict) -> list[str]:
    lines = [f"associated: {str(doc['holds']).lower()}" + (f" ({doc['failure']})" if doc["failure"] else "")]
    for r in doc["roles"]:
        lines.append(f"  {r['role']}: {r['projection']} <= {r['entry']}: {str(r['subtype']).lower()}"
                     + (f" ({r['failure']})" if r["failure"] else ""))
    if doc["end_part"]:
        lines.append(f"  finished: {', '.join(doc['end_part'])}")
    return lines


def cmd_assoc(sf: SourceFile, args) -> Outcome:
    g = _named(sf, args.global_, "global", parse_global)
    ctx = _named(sf, args.context, "context", parse_context)
    rep = check_association(g, ctx, args.session)
    doc = rep.to_json()
    return Outcome(doc, "\n".join(_assoc_text(doc)), rep.holds)


def _verdict_text(doc: dict) -> list[str]:
    lines = [f"{doc['property']}: {str(doc['holds']).lower()}"]
    w = doc["witness"]
    if w:
        lines.append(f"  trace: {' '.join(w['trace']) or '<start>'}")
        if w["pending"]:
            lines.append(f"  pending: {w['pending']}")
        if w["cycle"]:
            lines.append("  cycle: " + ", ".join(f"{e['from']}-{e['label']}->{e['to']}" for e in w["cycle"]))
        if w["detail"]:
            lines.append(f"  {w['detail']}")
    return lines


def cmd_props(sf: SourceFile, args) -> Outcome:
    ctx = _named(sf, args.context, "context", parse_context)
    graph = reachable_contexts(ctx, args.session, args.limit)
    verdicts = check_properties(ctx, args.session, args.limit)
    doc = {"session": args.session, "states": len(graph), "verdicts": [v.to_json() for v in verdicts]}
    text = [line for v in doc["verdicts"] for line in _verdict_text(v)]
    return Outcome(doc, "\n".join(text), all(v.holds for v in verdicts))


def cmd_verify(sf: SourceFile, args) -> Outcome:
    g = _named(sf, args.global_, "global", parse_global)
    rep = check_all_by_association(g, args.session, args.limit)
    doc = {"holds": rep.holds, "context": pretty(rep.context), "association": rep.association.to_json(),
           "verdicts": [v.to_json() for v in rep.verdicts]}
    text = [f"context: {doc['context']}"] + _assoc_text(doc["association"])
    text += [line for v in doc["verdicts"] for line in _verdict_text(v)]
    return Outcome(doc, "\n".join(text), rep.holds)


def _optional_context(sf: SourceFile, name: str | None) -> Context | None:
    return _named(sf, name, "context", parse_context) if name else None


def cmd_typecheck(sf: SourceFile, args) -> Outcome:
    p = _named(sf, args.process, "process", parse_process)
    ctx = _optional_context(sf, args.context) or Context()
    try:
        d = typecheck(None, ctx, p)
    except ProcessTypeError as e:
        return Outcome({"holds": False, "error": e.to_json()}, str(e), False)
    return Outcome({"holds": True, "derivation": d.to_json()}, d.render(), True)


def cmd_run(sf: SourceFile, args) -> Outcome:
    p = _named(sf, args.process, "process", parse_process)
    try:
        trace = run(p, args.budget, args.seed)
    except DynamicFault as e:
        raise UsageError(f"dynamic fault: {e}") from None
    doc = {"initial": pretty(trace.initial.to_process()), "outcome": trace.outcome,
           "steps": [{"index": s.index, "rule": s.rule, "label": s.label, "process": pretty(s.state.to_process())}
                     for s in trace.steps]}
    return Outcome(doc, "\n".join(trace.lines()), trace.outcome == "terminated")


def cmd_harness(sf: SourceFile, args) -> Outcome:
    kind = args.kind
    if kind in ("soundness", "completeness"):
        if not (args.global_ and args.context):
            raise UsageError(f"harness {kind} needs --global and --context")
        g = _named(sf, args.global_, "global", parse_global)
        ctx = _named(sf, args.context, "context", parse_context)
        fn = check_soundness_correspondence if kind == "soundness" else check_completeness_correspondence
        violations = [str(v) for v in fn(g, ctx, args.session, args.depth)]
        doc = {"harness": kind, "holds": not violations,
               "report": {"depth": args.depth, "violations": violations}}
        return Outcome(doc, "\n".join(violations) or "no violations", not violations)
    if not args.process:
        raise UsageError(f"harness {kind} needs --process")
    p = _named(sf, args.process, "process", parse_process)
    ctx = _optional_context(sf, args.context)
    g = _named(sf, args.global_, "global", parse_global) if args.global_ else None
    try:
        if kind == "fidelity":
            rep = session_fidelity_harness(ctx, p, args.session if ctx is not None else None, g)
            holds, report = rep.holds, rep.to_json()
        elif kind == "properties":
            rep = typed_process_properties(ctx, p, args.session if ctx is not None else None, g)
            holds, report = rep.deadlock_free and rep.live, rep.to_json()
        else:
            globals_ = {args.session: g} if g is not None else None
            rep = subject_reduction_harness(None, ctx, p, args.steps, args.seed, args.horizon, globals_)
            holds, report = rep.holds, rep.to_json()
    except PremiseViolation as e:
        holds, report = False, {"premise_violation": str(e)}
    except ProcessTypeError as e:
        holds, report = False, {"premise_violation": f"process untypable: {e}"}
    doc = {"harness": kind, "holds": holds, "report": report}
    return Outcome(doc, json.dumps(report, indent=2, ensure_ascii=False), holds)


COMMANDS = {
    "check": cmd_check, "project": cmd_project, "subtype": cmd_subtype, "simulate": cmd_simulate,
    "assoc": cmd_assoc, "props": cmd_props, "verify": cmd_verify, "typecheck": cmd_typecheck,
    "run": cmd_run, "harness": cmd_harness,
}


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mpst", description="Multiparty session types: projection, association, "
                                          "context properties and process typing.")
    ap.add_argument("--version", action="version", version=f"mpst {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help: str, formats=("json", "text")):
        p = sub.add_parser(name, help=help)
        p.add_argument("file", help=".mpst source file")
        p.add_argument("--format", choices=formats, default="json")
        return p

    command("check", "parse the file and report well-formedness diagnostics")
    p = command("project", "project a global type onto its roles")
    p.add_argument("--global", dest="global_", required=True)
    p.add_argument("--role")
    p = command("subtype", "decide LEFT <= RIGHT")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p = command("simulate", "enumerate transitions of a global type or a context",
                formats=("json", "text", "dot"))
    p.add_argument("--global", dest="global_")
    p.add_argument("--context")
    p.add_argument("--session", default="s")
    p.add_argument("--steps", type=int, default=5, help="depth for global types")
    p.add_argument("--replay", help="transmission labels (s:p->q:l ...) to follow before exploring a context")
    p.add_argument("--limit", type=int)
    p = command("assoc", "check association of a context with a global type")
    p.add_argument("--global", dest="global_", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("--session", default="s")
    p = command("props", "safety, deadlock freedom and liveness of a context")
    p.add_argument("--context", required=True)
    p.add_argument("--session", default="s")
    p.add_argument("--limit", type=int)
    p = command("verify", "project a global type and check the projected context")
    p.add_argument("--global", dest="global_", required=True)
    p.add_argument("--session", default="s")
    p.add_argument("--limit", type=int)
    p = command("typecheck", "type a process, printing its derivation")
    p.add_argument("--process", required=True)
    p.add_argument("--context")
    p = command("run", "execute a process with a seeded scheduler")
    p.add_argument("--process", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=1000)
    p = sub.add_parser("harness", help="run a metatheory harness on concrete inputs")
    p.add_argument("kind", choices=["soundness", "completeness", "fidelity", "subject-reduction", "properties"])
    p.add_argument("file")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--global", dest="global_")
    p.add_argument("--context")
    p.add_argument("--process")
    p.add_argument("--session", default="s")
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=4)
    p = sub.add_parser("schema", help="print the JSON schema of a subcommand's output")
    p.add_argument("name", choices=sorted(SCHEMAS))
    return ap


def _fail(kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, ensure_ascii=False) + "\n")
    return 2


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "schema":
            sys.stdout.write(json.dumps(SCHEMAS[args.name], indent=2, ensure_ascii=False) + "\n")
            return 0
        sf = _load(args.file)
        out = COMMANDS[args.command](sf, args)
    except UsageError as e:
        return _fail("UsageError", str(e))
    except ParseError as e:
        return _fail("ParseError", str(e), line=e.line, column=e.column, expected=e.expected, found=e.found)
    except LimitExceeded as e:
        return _fail("LimitExceeded", str(e))
    except IllFormed as e:
        return _fail("IllFormed", str(e))
    if args.format == "json":
        text = json.dumps(out.doc, indent=2, ensure_ascii=False)
    elif args.format == "dot":
        text = out.dot or ""
    else:
        text = out.text
    sys.stdout.write(text + "\n")
    return 0 if out.ok else 1


if __name__ == "__main__":
    sys.exit(main())
