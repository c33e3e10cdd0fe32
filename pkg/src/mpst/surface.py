"""Text syntax for types, contexts and processes (``.mpst`` files).

A file is a sequence of declarations::

    global G = s->c { login . c->a:passwd(str) . end, cancel . end }
    local T = c(+){ login . end, cancel . end }
    context Gamma = { s[s]: T, s[c]: end }
    process P = new s : G in (s[s][c](+)cancel.0 | ...)

Names declared earlier can be referred to later; they are inlined while
parsing, so the resulting ASTs never mention declaration names.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable

from .core import (
    Basic, Branch, Comm, Context, Diagnostic, End, Endpoint, External, Internal, Rec, Sort,
    Var, is_basic, well_formed,
)
from .picalc import (
    UNIT, Call, Def, Err, Lit, Name, Nil, Offer, OfferBranch, Par, Param, Process, Restrict,
    Select, literal,
)


class ParseError(ValueError):
    """Syntax error with a 1-based line/column position and what was expected."""

    def __init__(self, line: int, column: int, expected: str, found: str = ""):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        msg = f"{line}:{column}: expected {expected}"
        if found:
            msg += f", found {found}"
        super().__init__(msg)


KEYWORDS = {
    "global", "local", "context", "process", "rec", "end", "new", "in", "def", "with",
    "err", "true", "false", "int", "bool", "real", "str", "unit",
}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<float>-?\d+\.\d+(?:[eE][-+]?\d+)?|-?\d+[eE][-+]?\d+)
  | (?P<int>-?\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>->|\(\+\)|[&{}()\[\]<>.,:=|])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, int, float, string, sym, eof
    text: str
    line: int
    column: int

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(line, col, "a token", repr(text[pos]))
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            if kind == "ident" and chunk in KEYWORDS:
                kind = "keyword"
            out.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


# ---------------------------------------------------------------------------
# Declarations


@dataclass(frozen=True)
class Decl:
    kind: str  # global, local, context, process
    name: str
    value: object
    line: int
    column: int


@dataclass
class SourceFile:
    decls: list[Decl] = field(default_factory=list)
    diagnostics: list[tuple[int, int, str, Diagnostic]] = field(default_factory=list)

    def get(self, name: str, kind: str | None = None):
        for d in self.decls:
            if d.name == name and (kind is None or d.kind == kind):
                return d.value
        what = f"{kind} declaration" if kind else "declaration"
        raise KeyError(f"no {what} named {name!r}")

    def names(self, kind: str) -> list[str]:
        return [d.name for d in self.decls if d.kind == kind]


class _Parser:
    def __init__(self, text: str, env: dict[str, Decl] | None = None):
        self.toks = tokenize(text)
        self.i = 0
        self.env: dict[str, Decl] = dict(env or {})

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.tok
        return t.kind in ("sym", "keyword") and t.text == text

    def fail(self, expected: str):
        raise ParseError(self.tok.line, self.tok.column, expected, self.tok.describe())

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self, what: str = "an identifier") -> str:
        if self.tok.kind != "ident":
            self.fail(what)
        t = self.tok
        self.i += 1
        return t.text

    def done(self) -> None:
        if self.tok.kind != "eof":
            self.fail("end of input")

    # -- file
    def source_file(self) -> SourceFile:
        sf = SourceFile()
        while self.tok.kind != "eof":
            start = self.tok
            kind = self.tok.text if self.tok.kind == "keyword" else ""
            if kind not in ("global", "local", "context", "process"):
                self.fail("a declaration (global, local, context or process)")
            self.i += 1
            name = self.ident("a declaration name")
            if name in self.env:
                raise ParseError(start.line, start.column, f"a fresh name (duplicate declaration {name})")
            self.expect("=")
            value = {"global": self.global_type, "local": self.local_type,
                     "context": self.context, "process": self.process}[kind]()
            decl = Decl(kind, name, value, start.line, start.column)
            self.env[name] = decl
            sf.decls.append(decl)
            for diag in declaration_diagnostics(decl):
                sf.diagnostics.append((start.line, start.column, name, diag))
        return sf

    def lookup(self, name: str, kinds: tuple[str, ...]) -> Decl | None:
        d = self.env.get(name)
        return d if d is not None and d.kind in kinds else None

    # -- types
    def global_type(self, bound: frozenset[str] = frozenset()):
        t = self.tok
        if self.accept("end"):
            return End()
        if self.accept("rec"):
            v = self.ident("a recursion variable")
            self.expect(".")
            return Rec(v, self.global_type(bound | {v}))
        if self.accept("("):
            g = self.global_type(bound)
            self.expect(")")
            return g
        if t.kind == "ident":
            if self.at("->", 1):
                sender = self.ident()
                self.expect("->")
                receiver = self.ident("a receiving role")
                return Comm(sender, receiver, self.branches(lambda: self.global_type(bound), bound))
            self.i += 1
            if t.text in bound:
                return Var(t.text)
            d = self.lookup(t.text, ("global",))
            return d.value if d is not None else Var(t.text)
        self.fail("a global type")

    def local_type(self, bound: frozenset[str] = frozenset()):
        t = self.tok
        if self.accept("end"):
            return End()
        if self.accept("rec"):
            v = self.ident("a recursion variable")
            self.expect(".")
            return Rec(v, self.local_type(bound | {v}))
        if self.accept("("):
            lt = self.local_type(bound)
            self.expect(")")
            return lt
        if t.kind == "ident":
            if self.at("(+)", 1) or self.at("&", 1):
                peer = self.ident()
                ctor = Internal if self.tok.text == "(+)" else External
                self.i += 1
                return ctor(peer, self.branches(lambda: self.local_type(bound), bound))
            self.i += 1
            if t.text in bound:
                return Var(t.text)
            d = self.lookup(t.text, ("local",))
            return d.value if d is not None else Var(t.text)
        self.fail("a local type")

    def branches(self, cont: Callable[[], object], bound: frozenset[str] = frozenset()) -> tuple[Branch, ...]:
        if self.accept("{"):
            out = [self.branch(cont, bound)]
            while self.accept(","):
                out.append(self.branch(cont, bound))
            self.expect("}")
            return tuple(out)
        self.accept(":")
        return (self.branch(cont, bound),)

    def branch(self, cont: Callable[[], object], bound: frozenset[str]) -> Branch:
        label = self.ident("a label")
        payload: Sort = Basic.UNIT
        if self.accept("("):
            payload = self.sort(bound)
            self.expect(")")
        if self.accept("."):
            return Branch(label, payload, cont())
        return Branch(label, payload, End())

    def sort(self, bound: frozenset[str] = frozenset()) -> Sort:
        t = self.tok
        if t.kind == "keyword" and t.text in ("int", "bool", "real", "str", "unit"):
            self.i += 1
            return Basic(t.text)
        if self.accept("<"):
            lt = self.local_type(bound)
            self.expect(">")
            return lt
        return self.local_type(bound)

    # -- contexts
    def context(self) -> Context:
        if self.tok.kind == "ident":
            d = self.lookup(self.tok.text, ("context",))
            if d is None:
                self.fail("a context or a declared context name")
            self.i += 1
            return d.value
        start = self.expect("{")
        entries = []
        if not self.at("}"):
            entries.append(self.context_entry())
            while self.accept(","):
                entries.append(self.context_entry())
        self.expect("}")
        keys = [k for k, _ in entries]
        if len(set(keys)) != len(keys):
            raise ParseError(start.line, start.column, "distinct context keys")
        return Context(entries)

    def context_entry(self):
        name = self.ident("a session or variable name")
        if self.accept("["):
            role = self.ident("a role")
            self.expect("]")
            self.expect(":")
            return Endpoint(name, role), self.local_type()
        self.expect(":")
        return name, self.sort()

    # -- processes
    def process(self) -> Process:
        p = self.prefix_process()
        while self.accept("|"):
            p = Par(p, self.prefix_process())
        return p

    def prefix_process(self) -> Process:
        t = self.tok
        if t.kind == "int" and t.text == "0":
            self.i += 1
            return Nil()
        if self.accept("err"):
            return Err()
        if self.accept("("):
            p = self.process()
            self.expect(")")
            return p
        if self.accept("new"):
            return self.restriction()
        if self.accept("def"):
            return self.definition()
        if t.kind != "ident":
            self.fail("a process")
        if self.at("(", 1):
            name = self.ident()
            self.expect("(")
            args = []
            if not self.at(")"):
                args.append(self.value())
                while self.accept(","):
                    args.append(self.value())
            self.expect(")")
            return Call(name, tuple(args))
        if self.at("[", 1):
            chan, role = self.channel_and_role()
            if self.accept("(+)"):
                label = self.ident("a label")
                payload = UNIT
                if self.accept("<"):
                    payload = self.value()
                    self.expect(">")
                cont: Process = self.prefix_process() if self.accept(".") else Nil()
                return Select(chan, role, label, payload, cont)
            if self.accept("&"):
                return Offer(chan, role, self.offer_branches())
            self.fail("'(+)' or '&'")
        self.i += 1
        d = self.lookup(t.text, ("process",))
        if d is None:
            raise ParseError(t.line, t.column, "a process", f"undeclared name {t.text!r}")
        return d.value

    def channel_and_role(self):
        name = self.ident()
        self.expect("[")
        first = self.ident("a role")
        self.expect("]")
        if self.accept("["):
            role = self.ident("a role")
            self.expect("]")
            return Endpoint(name, first), role
        return Name(name), first

    def offer_branches(self) -> tuple[OfferBranch, ...]:
        if self.accept("{"):
            out = [self.offer_branch(self.process)]
            while self.accept(","):
                out.append(self.offer_branch(self.process))
            self.expect("}")
        else:
            self.accept(":")
            out = [self.offer_branch(self.prefix_process)]
        labels = [b.label for b in out]
        if len(set(labels)) != len(labels):
            self.fail("distinct branch labels")
        return tuple(out)

    def offer_branch(self, body: Callable[[], Process]) -> OfferBranch:
        label = self.ident("a label")
        var = "_"
        if self.accept("("):
            var = self.ident("a variable")
            self.expect(")")
        return OfferBranch(label, var, body() if self.accept(".") else Nil())

    def value(self):
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return literal(int(t.text))
        if t.kind == "float":
            self.i += 1
            return literal(float(t.text))
        if t.kind == "string":
            self.i += 1
            try:
                return literal(json.loads(t.text))
            except ValueError:
                raise ParseError(t.line, t.column, "a valid string literal", t.text) from None
        if self.accept("true"):
            return literal(True)
        if self.accept("false"):
            return literal(False)
        if self.at("(") and self.at(")", 1):
            self.i += 2
            return UNIT
        if t.kind == "ident":
            name = self.ident()
            if self.accept("["):
                role = self.ident("a role")
                self.expect("]")
                return Endpoint(name, role)
            return Name(name)
        self.fail("a value")

    def restriction(self) -> Restrict:
        session = self.ident("a session name")
        self.expect(":")
        g, ctx = None, None
        if self.at("{") or (self.tok.kind == "ident" and self.lookup(self.tok.text, ("context",))):
            ctx = self.context()
            if self.accept("with"):
                self.accept("global")
                g = self.global_type()
        else:
            g = self.global_type()
            if self.accept("with"):
                ctx = self.context()
        self.expect("in")
        return Restrict(session, g, ctx, self.process())

    def definition(self) -> Def:
        name = self.ident("a process variable")
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.accept(","):
                params.append(self.param())
        self.expect(")")
        self.expect("=")
        body = self.process()
        self.expect("in")
        return Def(name, tuple(params), body, self.process())

    def param(self) -> Param:
        x = self.ident("a parameter name")
        self.expect(":")
        return Param(x, self.sort())


def declaration_diagnostics(decl: Decl) -> list[Diagnostic]:
    v = decl.value
    if decl.kind in ("global", "local"):
        return well_formed(v)
    if decl.kind == "context":
        out = []
        for k, s in v.items():
            out += [Diagnostic(d.kind, d.message, (str(k),) + d.path) for d in well_formed(s)]
        return out
    return process_diagnostics(v)


def process_diagnostics(p: Process) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if isinstance(p, Restrict):
        if p.global_type is not None:
            out += well_formed(p.global_type)
        if p.context is not None:
            for s in p.context.values():
                out += well_formed(s)
        out += process_diagnostics(p.body)
    elif isinstance(p, Def):
        for x in p.params:
            out += well_formed(x.sort)
        out += process_diagnostics(p.body) + process_diagnostics(p.scope)
    elif isinstance(p, Par):
        out += process_diagnostics(p.left) + process_diagnostics(p.right)
    elif isinstance(p, Select):
        out += process_diagnostics(p.cont)
    elif isinstance(p, Offer):
        for b in p.branches:
            out += process_diagnostics(b.body)
    return out


def _guard(fn, text):
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(1, e.start + 1, "UTF-8 text", "undecodable byte") from None
    try:
        return fn(text)
    except RecursionError:
        raise ParseError(1, 1, "less deeply nested input", "nesting too deep") from None


def parse(text: str | bytes) -> SourceFile:
    """Parse a whole ``.mpst`` file."""

    def go(text: str) -> SourceFile:
        return _Parser(text).source_file()

    return _guard(go, text)


def _entry(method: str):
    def parse_one(text: str | bytes, env: SourceFile | None = None):
        def go(text: str):
            p = _Parser(text, {d.name: d for d in env.decls} if env else None)
            out = getattr(p, method)()
            p.done()
            return out

        return _guard(go, text)

    return parse_one


parse_global = _entry("global_type")
parse_local = _entry("local_type")
parse_sort = _entry("sort")
parse_context = _entry("context")
parse_process = _entry("process")


# ---------------------------------------------------------------------------
# Printing


def _payload(s: Sort) -> str:
    if s == Basic.UNIT:
        return ""
    return f"({pretty_sort(s)})"


def pretty_sort(s: Sort) -> str:
    if is_basic(s):
        return s.value
    return f"<{pretty(s)}>"


def _branches(bs: tuple[Branch, ...], single_prefix: str) -> str:
    parts = [f"{b.label}{_payload(b.payload)}.{pretty(b.cont)}" for b in bs]
    if len(parts) == 1:
        return single_prefix + parts[0]
    return "{" + ", ".join(parts) + "}"


def pretty_value(v) -> str:
    if isinstance(v, Endpoint):
        return str(v)
    if isinstance(v, Name):
        return v.name
    if isinstance(v, Lit):
        if v.sort == Basic.UNIT:
            return "()"
        if v.sort == Basic.BOOL:
            return "true" if v.value else "false"
        if v.sort == Basic.STR:
            return json.dumps(v.value)
        return repr(v.value)
    raise TypeError(f"not a value: {v!r}")


def _context(ctx: Context) -> str:
    parts = []
    for k, s in ctx.items():
        if isinstance(k, Endpoint):
            parts.append(f"{k}: {pretty(s)}")
        else:
            parts.append(f"{k}: {pretty_sort(s)}")
    return "{" + ", ".join(parts) + "}"


def _proc_atom(p: Process) -> str:
    """Print ``p`` so that it can appear after a prefix or inside ``|``."""
    if isinstance(p, (Par, Restrict, Def)):
        return f"({pretty(p)})"
    return pretty(p)


def pretty(node) -> str:
    """Surface text for any AST node; ``parse`` reads it back to the same AST."""
    if isinstance(node, Basic):
        return node.value
    if isinstance(node, End):
        return "end"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Rec):
        return f"rec {node.var} . {pretty(node.body)}"
    if isinstance(node, Comm):
        return f"{node.sender}->{node.receiver}" + _branches(node.branches, ":")
    if isinstance(node, Internal):
        return f"{node.peer}(+)" + _branches(node.branches, "")
    if isinstance(node, External):
        return f"{node.peer}&" + _branches(node.branches, "")
    if isinstance(node, Context):
        return _context(node)
    if isinstance(node, Nil):
        return "0"
    if isinstance(node, Err):
        return "err"
    if isinstance(node, Par):
        left = pretty(node.left) if isinstance(node.left, Par) else _proc_atom(node.left)
        return f"{left} | {_proc_atom(node.right)}"
    if isinstance(node, Select):
        payload = "" if node.payload == UNIT else f"<{pretty_value(node.payload)}>"
        chan = pretty_value(node.chan)
        return f"{chan}[{node.to}](+){node.label}{payload}.{_proc_atom(node.cont)}"
    if isinstance(node, Offer):
        chan = pretty_value(node.chan)
        parts = []
        for b in node.branches:
            binder = "" if b.var == "_" else f"({b.var})"
            parts.append(f"{b.label}{binder}.{pretty(b.body)}")
        return f"{chan}[{node.frm}]&{{" + ", ".join(parts) + "}"
    if isinstance(node, Call):
        return f"{node.name}(" + ", ".join(pretty_value(a) for a in node.args) + ")"
    if isinstance(node, Def):
        params = ", ".join(f"{x.name}: {pretty_sort(x.sort)}" for x in node.params)
        body = _proc_atom(node.body) if isinstance(node.body, (Restrict, Def)) else pretty(node.body)
        return f"def {node.name}({params}) = {body} in {pretty(node.scope)}"
    if isinstance(node, Restrict):
        if node.global_type is not None and node.context is not None:
            ann = f"{pretty(node.global_type)} with {_context(node.context)}"
        elif node.global_type is not None:
            ann = pretty(node.global_type)
        else:
            ann = _context(node.context)
        return f"new {node.session} : {ann} in {pretty(node.body)}"
    if isinstance(node, (Lit, Name, Endpoint)):
        return pretty_value(node)
    if isinstance(node, SourceFile):
        return "\n".join(f"{d.kind} {d.name} = {pretty(d.value)}" for d in node.decls) + "\n"
    raise TypeError(f"cannot print {type(node).__name__}")
