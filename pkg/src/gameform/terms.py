"""Logic terms and their textual form.

Terms are immutable. Numbers hold exact values (``int`` or
``fractions.Fraction``); a fraction with denominator 1 is always stored as an
``int`` so that ``1`` and ``1.0`` compare equal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

Value = Union[int, Fraction]


@dataclass(frozen=True, slots=True)
class Atom:
    name: str

    def __str__(self) -> str:
        return format_term(self)


@dataclass(frozen=True, slots=True)
class Number:
    value: Value

    def __post_init__(self):
        v = self.value
        if isinstance(v, Fraction) and v.denominator == 1:
            object.__setattr__(self, "value", int(v.numerator))

    def __str__(self) -> str:
        return format_term(self)


@dataclass(frozen=True, slots=True)
class Var:
    name: str
    id: int = 0

    def __str__(self) -> str:
        return format_term(self)


@dataclass(frozen=True, slots=True)
class Compound:
    functor: str
    args: tuple = field(default=())

    def __post_init__(self):
        if not self.args:
            raise ValueError("compound terms need at least one argument; use Atom")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self) -> str:
        return format_term(self)


Term = Union[Atom, Number, Var, Compound]

NIL = Atom("[]")
TRUE = Atom("true")


def mk(functor: str, *args: Term) -> Term:
    """Build ``functor(args...)``, or an atom when no args are given."""
    if not args:
        return Atom(functor)
    return Compound(functor, tuple(args))


def make_list(items, tail: Term = NIL) -> Term:
    out = tail
    for item in reversed(list(items)):
        out = Compound(".", (item, out))
    return out


def indicator(term: Term) -> tuple[str, int] | None:
    if isinstance(term, Atom):
        return term.name, 0
    if isinstance(term, Compound):
        return term.functor, len(term.args)
    return None


def iter_vars(term: Term) -> Iterator[Var]:
    """Yield variables left to right, repeats included."""
    stack = [term]
    while stack:
        t = stack.pop()
        if isinstance(t, Var):
            yield t
        elif isinstance(t, Compound):
            stack.extend(reversed(t.args))


def is_ground(term: Term) -> bool:
    return next(iter_vars(term), None) is None


def term_depth(term: Term) -> int:
    if isinstance(term, Compound):
        return 1 + max(term_depth(a) for a in term.args)
    return 0


# ---------------------------------------------------------------- writing

_PLAIN_ATOM = re.compile(r"[a-z][a-zA-Z0-9_]*\Z")

# priority, type; mirrored by the parser's tables
INFIX_OPS = {
    ":-": (1200, "xfx"),
    ";": (1100, "xfy"),
    "->": (1050, "xfy"),
    ",": (1000, "xfy"),
    "=": (700, "xfx"),
    "\\=": (700, "xfx"),
    "==": (700, "xfx"),
    "\\==": (700, "xfx"),
    "is": (700, "xfx"),
    "<": (700, "xfx"),
    ">": (700, "xfx"),
    "=<": (700, "xfx"),
    ">=": (700, "xfx"),
    "+": (500, "yfx"),
    "-": (500, "yfx"),
    "*": (400, "yfx"),
    "/": (400, "yfx"),
}
PREFIX_OPS = {
    ":-": (1200, "fx"),
    "?-": (1200, "fx"),
    "\\+": (900, "fy"),
    "-": (200, "fy"),
}

_ESCAPES = {"\\": "\\\\", "'": "\\'", "\n": "\\n", "\t": "\\t"}


def format_atom(name: str) -> str:
    if _PLAIN_ATOM.match(name) or name == "[]":
        return name
    return "'" + "".join(_ESCAPES.get(c, c) for c in name) + "'"


def format_number(value: Value) -> str:
    if isinstance(value, int):
        return str(value)
    num, den = value.numerator, value.denominator
    d, twos, fives = den, 0, 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{num}/{den}"
    places = max(twos, fives)
    scaled = abs(num) * 10**places // den
    sign = "-" if num < 0 else ""
    whole, frac = divmod(scaled, 10**places)
    return f"{sign}{whole}.{frac:0{places}d}"


def format_term(term: Term, max_prec: int = 1200) -> str:
    """Render a term so that the parser reads it back unchanged."""
    if isinstance(term, Atom):
        s = format_atom(term.name)
        if term.name in INFIX_OPS or term.name in PREFIX_OPS:
            return s if s.startswith("'") else f"'{s}'"
        return s
    if isinstance(term, Number):
        return format_number(term.value)
    if isinstance(term, Var):
        return term.name or "_"
    if term.functor == "." and len(term.args) == 2:
        return _format_list(term)
    if len(term.args) == 2 and term.functor in INFIX_OPS:
        prec, kind = INFIX_OPS[term.functor]
        lmax = prec if kind == "yfx" else prec - 1
        rmax = prec if kind == "xfy" else prec - 1
        left = format_term(term.args[0], lmax)
        right = format_term(term.args[1], rmax)
        if term.functor == ",":
            s = f"{left}, {right}"
        else:
            s = f"{left} {term.functor} {right}"
        return f"({s})" if prec > max_prec else s
    if len(term.args) == 1 and term.functor == "\\+":
        s = "\\+ " + format_term(term.args[0], 900)
        return f"({s})" if 900 > max_prec else s
    args = ",".join(format_term(a, 999) for a in term.args)
    return f"{format_atom(term.functor)}({args})"


def _format_list(term: Compound) -> str:
    items = []
    t: Term = term
    while isinstance(t, Compound) and t.functor == "." and len(t.args) == 2:
        items.append(format_term(t.args[0], 999))
        t = t.args[1]
    body = ",".join(items)
    if t == NIL:
        return f"[{body}]"
    return f"[{body}|{format_term(t, 999)}]"
