"""Lexer and operator-precedence parser for the game-description dialect.

The dialect is a closed subset of Prolog: the operators in
``terms.INFIX_OPS`` / ``terms.PREFIX_OPS``, ``%`` line comments and
``/* */`` block comments, quoted atoms, integers and decimals. Anything else
is reported as an error with a line/column span. Error messages are stable
strings because they are quoted back to the model in repair prompts.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate

from .terms import (
    INFIX_OPS,
    NIL,
    PREFIX_OPS,
    Atom,
    Compound,
    Number,
    Term,
    Var,
    format_term,
)

E_COMMENT = "unsupported comment delimiter '//'; comments must start with %"
E_QUOTE = "unterminated quoted atom"
E_BLOCK = "unterminated block comment"
E_CHAR = "unexpected character {!r}"
E_UNEXPECTED = "unexpected token {}"
E_EXPECTED = "expected {} but found {}"
E_EOF = "unexpected end of input; missing '.' at end of clause"
E_PRIORITY = "operator priority clash at {}"
E_HEAD_VAR = "clause head cannot be a variable"
E_HEAD_NUM = "clause head cannot be a number"
E_HEAD_CTRL = "clause head cannot be the control construct {}"
E_GOAL_NUM = "body goal cannot be a number"
W_SINGLETON = "singleton variable {}"
W_DIRECTIVE = "unknown directive {}"

SINGLETON = "singleton_variable"
UNKNOWN_DIRECTIVE = "unknown_directive"

_SYMBOL_OPS = sorted(
    {":-", "?-", "->", "\\+", "\\=", "==", "\\==", "=", "<", ">", "=<", ">=", "+", "-", "*", "/"},
    key=len,
    reverse=True,
)
_SYMBOL_CHARS = set("+-*/\\^<>=~:.?@#&$")
_SOLO = {";": ";", "!": "!"}
_PUNCT = set("(),|[]")
_CONTROL = {",", ";", "->", "\\+", ":-", "?-"}


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    start: int
    end: int


@dataclass(frozen=True)
class Token:
    kind: str  # atom qatom functor var int dec punct end error eof
    value: object
    span: Span
    layout_before: bool = False

    def describe(self) -> str:
        if self.kind == "end":
            return "'.'"
        if self.kind == "eof":
            return "end of input"
        if self.kind == "functor":
            return repr(f"{self.value}(")
        if self.kind in ("int", "dec"):
            return str(self.value)
        return repr(str(self.value))


@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: Span
    kind: str = "syntax_error"

    def to_dict(self, with_kind: bool) -> dict:
        d = {"message": self.message, "line": self.span.line, "col": self.span.col}
        if with_kind:
            d = {"kind": self.kind, **d}
        return d


@dataclass
class SyntaxReport:
    errors: list[Diagnostic] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [e.to_dict(False) for e in self.errors],
            "warnings": [w.to_dict(True) for w in self.warnings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SyntaxReport":
        def diag(x, kind):
            line, col = x["line"], x["col"]
            return Diagnostic(x["message"], Span(line, col, 0, 0), x.get("kind", kind))

        return cls(
            errors=[diag(e, "syntax_error") for e in d.get("errors", [])],
            warnings=[diag(w, SINGLETON) for w in d.get("warnings", [])],
        )


@dataclass(frozen=True)
class Clause:
    head: Term
    body: tuple = ()
    span: Span | None = field(default=None, compare=False)
    nvars: int = field(default=0, compare=False)

    def __str__(self) -> str:
        head = format_term(self.head, 1199)
        if not self.body:
            return head + "."
        goals = ",\n    ".join(format_term(g, 999) for g in self.body)
        return f"{head} :-\n    {goals}."


@dataclass
class Program:
    clauses: list[Clause] = field(default_factory=list)
    source_name: str = field(default="<string>", compare=False)

    def __add__(self, other: "Program") -> "Program":
        return Program(self.clauses + other.clauses, f"{self.source_name}+{other.source_name}")

    def __len__(self) -> int:
        return len(self.clauses)

    def to_source(self) -> str:
        return "".join(f"{c}\n" for c in self.clauses)

    def predicates(self) -> dict[tuple[str, int], list[Clause]]:
        out: dict[tuple[str, int], list[Clause]] = {}
        for c in self.clauses:
            h = c.head
            key = (h.name, 0) if isinstance(h, Atom) else (h.functor, len(h.args))
            out.setdefault(key, []).append(c)
        return out


class LexError(Exception):
    def __init__(self, message: str, span: Span):
        super().__init__(f"{span.line}:{span.col}: {message}")
        self.message = message
        self.span = span


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        first = diagnostics[0]
        super().__init__(f"{first.span.line}:{first.span.col}: {first.message}")
        self.diagnostics = diagnostics


# ------------------------------------------------------------------- lexing


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.n = len(text)
        self.line_starts = [0] + [i + 1 for i, c in enumerate(text) if c == "\n"]
        if text.isascii():
            self._bytes = None
        else:
            self._bytes = [0, *accumulate(len(c.encode("utf-8")) for c in text)]
        self.tokens: list[Token] = []
        self.errors: list[Diagnostic] = []

    def span(self, start: int, end: int) -> Span:
        line = bisect.bisect_right(self.line_starts, start)
        col = start - self.line_starts[line - 1] + 1
        if self._bytes is None:
            return Span(line, col, start, end)
        return Span(line, col, self._bytes[start], self._bytes[end])

    def error(self, message: str, start: int, end: int, emit: bool):
        sp = self.span(start, end)
        self.errors.append(Diagnostic(message, sp, "lexical_error"))
        if emit:
            self.tokens.append(Token("error", message, sp))

    def run(self) -> "_Lexer":
        text, n, i = self.text, self.n, 0
        layout = True
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                layout = True
                continue
            if c == "%":
                i = self._eol(i)
                layout = True
                continue
            if text.startswith("//", i):
                self.error(E_COMMENT, i, i + 2, emit=False)
                i = self._eol(i)
                layout = True
                continue
            if text.startswith("/*", i):
                j = text.find("*/", i + 2)
                if j < 0:
                    self.error(E_BLOCK, i, i + 2, emit=True)
                    i = n
                else:
                    i = j + 2
                layout = True
                continue
            start = i
            if c.isascii() and c.isalpha() and c.islower():
                i = self._name(text[start:self._word(i)], start, layout)
            elif c == "_" or (c.isascii() and c.isupper()):
                i = self._word(i)
                self.tokens.append(Token("var", text[start:i], self.span(start, i), layout))
            elif c.isdigit():
                i = self._number(i, layout)
            elif c == "'":
                i = self._quoted(i, layout)
            elif c in _PUNCT:
                i += 1
                self.tokens.append(Token("punct", c, self.span(start, i), layout))
            elif c in _SOLO:
                i = self._name(c, start, layout)
            elif c == "." and (i + 1 >= n or text[i + 1].isspace() or text[i + 1] == "%"):
                i += 1
                self.tokens.append(Token("end", ".", self.span(start, i), layout))
            elif c in _SYMBOL_CHARS:
                op = next((o for o in _SYMBOL_OPS if text.startswith(o, i)), None)
                if op is None:
                    i += 1
                    self.error(E_CHAR.format(c), start, i, emit=True)
                else:
                    i = self._name(op, start, layout)
            else:
                i += 1
                self.error(E_CHAR.format(c), start, i, emit=True)
            layout = False
        end = self.span(n, n)
        self.tokens.append(Token("eof", None, end, True))
        return self

    def _eol(self, i: int) -> int:
        j = self.text.find("\n", i)
        return self.n if j < 0 else j

    def _word(self, i: int) -> int:
        text, n = self.text, self.n
        i += 1
        while i < n and (text[i] == "_" or (text[i].isascii() and text[i].isalnum())):
            i += 1
        return i

    def _name(self, name: str, start: int, layout: bool) -> int:
        end = start + len(name)
        if end < self.n and self.text[end] == "(":
            self.tokens.append(Token("functor", name, self.span(start, end + 1), layout))
            return end + 1
        self.tokens.append(Token("atom", name, self.span(start, end), layout))
        return end

    def _number(self, i: int, layout: bool) -> int:
        text, n, start = self.text, self.n, i
        while i < n and text[i].isdigit():
            i += 1
        if i + 1 < n and text[i] == "." and text[i + 1].isdigit():
            i += 1
            while i < n and text[i].isdigit():
                i += 1
            value = Fraction(text[start:i])
            self.tokens.append(Token("dec", Number(value).value, self.span(start, i), layout))
        else:
            self.tokens.append(Token("int", int(text[start:i]), self.span(start, i), layout))
        return i

    def _quoted(self, i: int, layout: bool) -> int:
        text, n, start = self.text, self.n, i
        i += 1
        chars = []
        escapes = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"'}
        while True:
            if i >= n or text[i] == "\n":
                self.error(E_QUOTE, start, start + 1, emit=True)
                return i
            c = text[i]
            if c == "'":
                if i + 1 < n and text[i + 1] == "'":
                    chars.append("'")
                    i += 2
                    continue
                i += 1
                break
            if c == "\\" and i + 1 < n and text[i + 1] in escapes:
                chars.append(escapes[text[i + 1]])
                i += 2
                continue
            chars.append(c)
            i += 1
        name = "".join(chars)
        if i < n and text[i] == "(":
            self.tokens.append(Token("functor", name, self.span(start, i + 1), layout))
            return i + 1
        self.tokens.append(Token("qatom", name, self.span(start, i), layout))
        return i


def _lex(text: str) -> _Lexer:
    return _Lexer(text).run()


def tokenize(text: str) -> list[Token]:
    """Return the token stream (without the trailing EOF marker).

    Raises ``LexError`` for the first lexical error.
    """
    lx = _lex(text)
    if lx.errors:
        e = lx.errors[0]
        raise LexError(e.message, e.span)
    return lx.tokens[:-1]


# ------------------------------------------------------------------ parsing


class _ClauseError(Exception):
    def __init__(self, message: str, token: Token):
        self.message = message
        self.token = token


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0
        self.vars: dict[str, Var] = {}
        self.occurrences: dict[str, list[Span]] = {}
        self.nvars = 0
        self.spans: dict[int, Span] = {}

    # token helpers
    def peek(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        tok = self.toks[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def last_real(self) -> Token:
        j = min(self.pos, len(self.toks) - 1)
        while j > 0 and self.toks[j].kind == "eof":
            j -= 1
        return self.toks[j]

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        if tok.kind == "eof":
            raise _ClauseError(E_EOF, self.last_real())
        raise _ClauseError(message, tok)

    def expect(self, value: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == value:
            return self.advance()
        if tok.kind == "error":
            self.fail(tok.value, tok)
        self.fail(E_EXPECTED.format(what, tok.describe()), tok)

    def reset_clause(self):
        self.vars = {}
        self.occurrences = {}
        self.nvars = 0
        self.spans = {}

    def new_var(self, name: str, tok: Token) -> Var:
        if name == "_":
            v = Var("_", self.nvars)
            self.nvars += 1
            return v
        self.occurrences.setdefault(name, []).append(tok.span)
        v = self.vars.get(name)
        if v is None:
            v = self.vars[name] = Var(name, self.nvars)
            self.nvars += 1
        return v

    # grammar
    def parse(self, max_prec: int) -> tuple[Term, int]:
        left, prec = self.primary(max_prec)
        return self.infix(left, prec, max_prec)

    def _starts_term(self, tok: Token) -> bool:
        if tok.kind in ("atom", "qatom", "functor", "var", "int", "dec"):
            return not (tok.kind == "atom" and tok.value in INFIX_OPS and tok.value not in PREFIX_OPS)
        return tok.kind == "punct" and tok.value in ("(", "[")

    def primary(self, max_prec: int) -> tuple[Term, int]:
        tok = self.advance()
        kind = tok.kind
        if kind == "error":
            self.fail(tok.value, tok)
        if kind in ("int", "dec"):
            return self._mark(Number(tok.value), tok), 0
        if kind == "var":
            return self.new_var(tok.value, tok), 0
        if kind == "functor":
            args = self.arglist()
            return self._mark(Compound(tok.value, tuple(args)), tok), 0
        if kind == "qatom":
            return self._mark(Atom(tok.value), tok), 0
        if kind == "punct":
            if tok.value == "(":
                inner, _ = self.parse(1200)
                self.expect(")", "')'")
                return inner, 0
            if tok.value == "[":
                return self.list_tail(tok), 0
            self.fail(E_UNEXPECTED.format(tok.describe()), tok)
        if kind == "atom":
            name = tok.value
            nxt = self.peek()
            if name == "-" and nxt.kind in ("int", "dec") and not nxt.layout_before:
                self.advance()
                return self._mark(Number(-nxt.value), tok), 0
            if name in PREFIX_OPS and self._starts_term(nxt):
                prec, typ = PREFIX_OPS[name]
                if prec > max_prec:
                    self.fail(E_PRIORITY.format(tok.describe()), tok)
                arg, _ = self.parse(prec if typ == "fy" else prec - 1)
                return self._mark(Compound(name, (arg,)), tok), prec
            return self._mark(Atom(name), tok), 0
        self.fail(E_UNEXPECTED.format(tok.describe()), tok)

    def arglist(self) -> list[Term]:
        args = []
        while True:
            arg, _ = self.parse(999)
            args.append(arg)
            tok = self.peek()
            if tok.kind == "punct" and tok.value == ",":
                self.advance()
                continue
            self.expect(")", "',' or ')'")
            return args

    def list_tail(self, open_tok: Token) -> Term:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == "]":
            self.advance()
            return self._mark(NIL, open_tok)
        items = []
        tail: Term = NIL
        while True:
            item, _ = self.parse(999)
            items.append(item)
            tok = self.peek()
            if tok.kind == "punct" and tok.value == ",":
                self.advance()
                continue
            if tok.kind == "punct" and tok.value == "|":
                self.advance()
                tail, _ = self.parse(999)
            self.expect("]", "',' or ']'")
            break
        out = tail
        for item in reversed(items):
            out = Compound(".", (item, out))
        return self._mark(out, open_tok)

    def _infix_name(self, tok: Token) -> str | None:
        if tok.kind == "punct" and tok.value == ",":
            return ","
        if tok.kind in ("atom", "functor") and tok.value in INFIX_OPS:
            return tok.value
        return None

    def infix(self, left: Term, left_prec: int, max_prec: int) -> tuple[Term, int]:
        while True:
            tok = self.peek()
            name = self._infix_name(tok)
            if name is None:
                return left, left_prec
            prec, typ = INFIX_OPS[name]
            if prec > max_prec:
                return left, left_prec
            left_max = prec if typ == "yfx" else prec - 1
            right_max = prec if typ == "xfy" else prec - 1
            if left_prec > left_max:
                self.fail(E_PRIORITY.format(tok.describe()), tok)
            self.advance()
            if tok.kind == "functor":
                # `a-(b)`: the name is an infix operator applied to a bracketed term
                inner, _ = self.parse(1200)
                self.expect(")", "')'")
                right, _ = self.infix(inner, 0, right_max)
            else:
                right, _ = self.parse(right_max)
            left = self._mark(Compound(name, (left, right)), tok)
            left_prec = prec

    def _mark(self, term: Term, tok: Token) -> Term:
        self.spans[id(term)] = tok.span
        return term

    # clauses
    def clause(self, report: SyntaxReport) -> Clause | None:
        self.reset_clause()
        first = self.peek()
        term, _ = self.parse(1200)
        end = self.peek()
        if end.kind != "end":
            if end.kind == "error":
                self.fail(end.value, end)
            self.fail(E_EXPECTED.format("operator or '.'", end.describe()), end)
        self.advance()
        span = Span(first.span.line, first.span.col, first.span.start, end.span.end)

        if isinstance(term, Compound) and term.functor in (":-", "?-") and len(term.args) == 1:
            report.warnings.append(
                Diagnostic(
                    W_DIRECTIVE.format(f"{term.functor} {format_term(term.args[0], 1199)}"),
                    first.span,
                    UNKNOWN_DIRECTIVE,
                )
            )
            return None
        if isinstance(term, Compound) and term.functor == ":-" and len(term.args) == 2:
            head, body = term.args
            goals = _flatten_conj(body)
        else:
            head, goals = term, []
        if isinstance(head, Var):
            self.fail(E_HEAD_VAR, first)
        if isinstance(head, Number):
            self.fail(E_HEAD_NUM, first)
        if isinstance(head, Compound) and head.functor in _CONTROL and len(head.args) <= 2:
            self.fail(E_HEAD_CTRL.format(format_term(Atom(head.functor))), first)
        for g in goals:
            if isinstance(g, Number):
                self.fail(E_GOAL_NUM, Token("int", g.value, self.spans.get(id(g), first.span)))
        for name, spans in self.occurrences.items():
            if len(spans) == 1:
                report.warnings.append(Diagnostic(W_SINGLETON.format(name), spans[0], SINGLETON))
        return Clause(head, tuple(goals), span, self.nvars)

    def skip_clause(self):
        while self.peek().kind not in ("end", "eof"):
            self.pos += 1
        if self.peek().kind == "end":
            self.pos += 1


def _flatten_conj(body: Term) -> list[Term]:
    out = []
    stack = [body]
    while stack:
        t = stack.pop()
        if isinstance(t, Compound) and t.functor == "," and len(t.args) == 2:
            stack.append(t.args[1])
            stack.append(t.args[0])
        else:
            out.append(t)
    return out


def parse_program(
    text: str, source_name: str = "<string>", strict: bool = False
) -> tuple[Program, SyntaxReport]:
    """Parse a whole program, recovering at clause boundaries.

    Clauses that fail to parse are left out of the returned program; every
    problem is recorded in the report. ``strict`` turns singleton-variable
    warnings into errors.
    """
    lx = _lex(text)
    report = SyntaxReport(errors=list(lx.errors))
    p = _Parser(lx.tokens)
    clauses = []
    while p.peek().kind != "eof":
        start = p.pos
        try:
            c = p.clause(report)
        except _ClauseError as err:
            if err.token.kind != "error":
                report.errors.append(Diagnostic(err.message, err.token.span))
            # an error raised after the clause's '.' was consumed needs no skipping
            if not (p.pos > start and p.toks[p.pos - 1].kind == "end"):
                p.skip_clause()
            continue
        if c is not None:
            clauses.append(c)
    if strict:
        singles = [w for w in report.warnings if w.kind == SINGLETON]
        report.warnings = [w for w in report.warnings if w.kind != SINGLETON]
        report.errors.extend(singles)
    report.errors.sort(key=lambda d: d.span.start)
    report.warnings.sort(key=lambda d: d.span.start)
    return Program(clauses, source_name), report


def check_syntax(text: str, strict: bool = False) -> SyntaxReport:
    return parse_program(text, strict=strict)[1]


def parse_query(text: str) -> tuple[list[Term], dict[str, Var]]:
    """Parse ``?- G1, G2.`` (prefix and final period optional) into goals.

    Returns the goal list and the named variables in order of appearance.
    """
    src = text.strip()
    if src.startswith("?-"):
        src = src[2:]
    if not src.rstrip().endswith("."):
        src = src + " ."
    lx = _lex(src)
    if lx.errors:
        raise ParseError(lx.errors)
    p = _Parser(lx.tokens)
    try:
        term, _ = p.parse(1200)
        if p.peek().kind != "end":
            p.fail(E_EXPECTED.format("operator or '.'", p.peek().describe()))
        p.advance()
        if p.peek().kind != "eof":
            p.fail(E_UNEXPECTED.format(p.peek().describe()))
    except _ClauseError as err:
        raise ParseError([Diagnostic(err.message, err.token.span)]) from None
    return _flatten_conj(term), dict(p.vars)


def parse_term(text: str) -> Term:
    goals, _ = parse_query(text)
    if len(goals) == 1:
        return goals[0]
    out = goals[-1]
    for g in reversed(goals[:-1]):
        out = Compound(",", (g, out))
    return out
