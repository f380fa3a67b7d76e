"""Backtracking resolution engine with the situation-calculus game rules built in.

The machine is iterative: goals live on a linked continuation, alternatives on
an explicit choicepoint stack, and bindings on a trail that is unwound on
backtracking. Only negation and if-then-else recurse (they run a sub-query to
its first solution), so deep recursion in user programs is bounded by the step
budget rather than the Python stack.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .parser import Clause, Program, parse_program, parse_query
from .terms import Atom, Compound, Number, Term, Var, format_term, is_ground, mk

log = logging.getLogger(__name__)

GAMMA_SOURCE = """\
game(F,F):-
    final(F).
game(S,F):-
    \\+ final(S),
    legal(M,S),
    game(do(M,S),F).
holds(F, S):-
    initially(F, S).
holds(F, do(M, S)):-
    effect(F, M, S).
holds(F, do(M, S)):-
    holds(F, S),
    \\+ abnormal(F, M, S).
"""


class EngineError(Exception):
    kind = "engine_error"


class ResourceLimitError(EngineError):
    kind = "resource_limit"


class EngineTypeError(EngineError):
    kind = "type_error"


class NoInitialError(EngineError):
    kind = "no_initial"


class NoOutcomesError(EngineError):
    kind = "no_outcomes"


@dataclass(frozen=True)
class EngineLimits:
    max_inference_steps: int = 1_000_000
    max_term_depth: int = 512
    max_solutions: int | None = None


@dataclass
class Diagnostics:
    steps: int = 0
    unknown_predicates: Counter = field(default_factory=Counter)
    nonground_naf: int = 0


@dataclass
class Solution:
    bindings: dict[str, Term]
    index: int

    def format(self) -> str:
        shown = [
            f"{name}={format_term(value, 699)}"
            for name, value in self.bindings.items()
            if not (isinstance(value, Var) and value.name == name)
        ]
        return ", ".join(shown) if shown else "true"


def format_transcript(solutions: Iterable[Solution]) -> str:
    """Render solutions the way an interactive top level prints them."""
    lines = [f"{s.format()} ;" for s in solutions]
    lines.append("false.")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ compile

_FAIL = object()
_ALT = 0
_CLAUSES = 1


def _key(t: Term):
    tt = type(t)
    if tt is Atom:
        return t
    if tt is Number:
        return t
    if tt is Compound:
        return (t.functor, len(t.args))
    return None


def _ground_ids(t: Term, out: set) -> bool:
    if type(t) is Var:
        return False
    if type(t) is Compound:
        g = True
        for a in t.args:
            g = _ground_ids(a, out) and g
        if not g:
            return False
    out.add(id(t))
    return True


class _CClause:
    __slots__ = ("head", "body", "nvars", "keys", "ground", "source")

    def __init__(self, clause: Clause):
        self.source = clause
        self.head = clause.head
        self.body = clause.body
        nvars = clause.nvars
        if nvars == 0:
            ids = [v.id for t in (self.head, *self.body) for v in _vars(t)]
            nvars = max(ids) + 1 if ids else 0
        self.nvars = nvars
        args = self.head.args if type(self.head) is Compound else ()
        self.keys = tuple(_key(a) for a in args)
        self.ground: set = set()
        for t in (self.head, *self.body):
            _ground_ids(t, self.ground)


def _vars(t: Term) -> Iterator[Var]:
    if type(t) is Var:
        yield t
    elif type(t) is Compound:
        for a in t.args:
            yield from _vars(a)


def _compile(program: Program) -> dict:
    index: dict = {}
    for c in program.clauses:
        h = c.head
        key = (h.name, 0) if type(h) is Atom else (h.functor, len(h.args))
        index.setdefault(key, []).append(_CClause(c))
    return index


# ------------------------------------------------------------------ machine


class _Machine:
    def __init__(self, index: dict, limits: EngineLimits, first_fresh: int):
        self.index = index
        self.limits = limits
        self.bindings: dict = {}
        self.trail: list = []
        self.fresh = first_fresh
        self.nesting = 0
        self.diag = Diagnostics()

    # bindings
    def walk(self, t):
        b = self.bindings
        while type(t) is Var:
            nt = b.get(t)
            if nt is None:
                return t
            t = nt
        return t

    def resolve(self, t):
        t = self.walk(t)
        if type(t) is Compound:
            return Compound(t.functor, tuple(self.resolve(a) for a in t.args))
        return t

    def undo(self, mark: int):
        trail, b = self.trail, self.bindings
        while len(trail) > mark:
            del b[trail.pop()]

    def occurs(self, v: Var, t) -> bool:
        stack = [t]
        while stack:
            t = self.walk(stack.pop())
            if t == v and type(t) is Var:
                return True
            if type(t) is Compound:
                stack.extend(t.args)
        return False

    def unify(self, a, b) -> bool:
        stack = [(a, b)]
        walk = self.walk
        while stack:
            a, b = stack.pop()
            a = walk(a)
            b = walk(b)
            if a is b:
                continue
            ta, tb = type(a), type(b)
            if ta is Var:
                if tb is Var and a == b:
                    continue
                if tb is Compound and self.occurs(a, b):
                    return False
                self.bindings[a] = b
                self.trail.append(a)
            elif tb is Var:
                if ta is Compound and self.occurs(b, a):
                    return False
                self.bindings[b] = a
                self.trail.append(b)
            elif ta is Compound:
                if tb is not Compound or a.functor != b.functor or len(a.args) != len(b.args):
                    return False
                stack.extend(zip(a.args, b.args))
            elif a != b:
                return False
        return True

    # clause renaming
    def copy(self, t, base: int, ground: set):
        if id(t) in ground:
            return t
        tt = type(t)
        if tt is Var:
            return Var(t.name, base + t.id)
        return Compound(t.functor, tuple([self.copy(a, base, ground) for a in t.args]))

    def too_deep(self, t) -> bool:
        limit = self.limits.max_term_depth
        stack = [(t, 0)]
        walk = self.walk
        while stack:
            t, d = stack.pop()
            t = walk(t)
            if type(t) is Compound:
                d += 1
                if d > limit:
                    return True
                stack.extend((a, d) for a in t.args)
        return False

    # main loop
    def run(self, cont) -> Iterator[bool]:
        stack: list = []
        while True:
            if cont is None:
                yield True
                cont = _FAIL
            else:
                cont = self.step(cont, stack)
            while cont is _FAIL:
                if not stack:
                    return
                cont = self.backtrack(stack)

    def backtrack(self, stack: list):
        cp = stack[-1]
        self.undo(cp[-1])
        if cp[0] == _ALT:
            stack.pop()
            return cp[1]
        _, goal, clauses, idx, nxt, mark = cp
        cont, idx = self.try_clauses(goal, clauses, idx, nxt, mark)
        if cont is _FAIL or idx >= len(clauses):
            stack.pop()
        else:
            cp[3] = idx
        return cont

    def try_clauses(self, goal, clauses, i: int, nxt, mark: int):
        n = len(clauses)
        if type(goal) is Compound:
            walk = self.walk
            gkeys = [_key(walk(a)) for a in goal.args]
        else:
            gkeys = ()
        while i < n:
            c = clauses[i]
            i += 1
            skip = False
            for ck, gk in zip(c.keys, gkeys):
                if ck is not None and gk is not None and ck != gk:
                    skip = True
                    break
            if skip:
                continue
            base = self.fresh
            self.fresh += c.nvars
            if self.unify(self.copy(c.head, base, c.ground), goal):
                cont = nxt
                for g in reversed(c.body):
                    cont = (self.copy(g, base, c.ground), cont)
                return cont, i
            self.undo(mark)
        return _FAIL, n

    def step(self, cont, stack: list):
        diag = self.diag
        diag.steps += 1
        if diag.steps > self.limits.max_inference_steps:
            raise ResourceLimitError(
                f"inference step limit of {self.limits.max_inference_steps} exceeded"
            )
        goal, nxt = cont
        goal = self.walk(goal)
        tg = type(goal)
        if tg is Compound:
            name, args = goal.functor, goal.args
        elif tg is Atom:
            name, args = goal.name, ()
        elif tg is Var:
            raise EngineTypeError("instantiation error: goal is an unbound variable")
        else:
            raise EngineTypeError(f"type error: {format_term(goal)} is not callable")
        key = (name, len(args))
        builtin = _BUILTINS.get(key)
        if builtin is not None:
            return builtin(self, args, nxt, stack)
        clauses = self.index.get(key)
        if clauses is None:
            diag.unknown_predicates[f"{name}/{len(args)}"] += 1
            return _FAIL
        if tg is Compound and self.too_deep(goal):
            raise ResourceLimitError(
                f"term depth limit of {self.limits.max_term_depth} exceeded"
            )
        mark = len(self.trail)
        cont, idx = self.try_clauses(goal, clauses, 0, nxt, mark)
        if cont is not _FAIL and idx < len(clauses):
            stack.append([_CLAUSES, goal, clauses, idx, nxt, mark])
        return cont

    def first(self, goal) -> bool:
        """Run ``goal`` to its first solution, keeping its bindings."""
        self.nesting += 1
        if self.nesting > self.limits.max_term_depth:
            raise ResourceLimitError("nesting of negation/if-then-else too deep")
        gen = self.run((goal, None))
        try:
            return next(gen, False)
        finally:
            gen.close()
            self.nesting -= 1

    def evaluate(self, t):
        t = self.walk(t)
        tt = type(t)
        if tt is Number:
            return t.value
        if tt is Var:
            raise EngineTypeError("instantiation error: unbound variable in arithmetic")
        if tt is Compound:
            f, args = t.functor, t.args
            if len(args) == 2 and f in _ARITH:
                a = self.evaluate(args[0])
                b = self.evaluate(args[1])
                if f == "/":
                    if b == 0:
                        raise EngineTypeError("evaluation error: division by zero")
                    r = Fraction(a) / b
                    return r.numerator if r.denominator == 1 else r
                return _ARITH[f](a, b)
            if len(args) == 1 and f == "-":
                return -self.evaluate(args[0])
            if len(args) == 1 and f == "+":
                return self.evaluate(args[0])
        raise EngineTypeError(f"type error: {format_term(self.resolve(t))} is not a number")


_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": None,
}


def _b_true(m, args, nxt, stack):
    return nxt


def _b_fail(m, args, nxt, stack):
    return _FAIL


def _b_conj(m, args, nxt, stack):
    return (args[0], (args[1], nxt))


def _b_disj(m, args, nxt, stack):
    left = m.walk(args[0])
    if type(left) is Compound and left.functor == "->" and len(left.args) == 2:
        cond, then = left.args
        if m.first(cond):
            return (then, nxt)
        return (args[1], nxt)
    stack.append([_ALT, (args[1], nxt), len(m.trail)])
    return (left, nxt)


def _b_ifthen(m, args, nxt, stack):
    if m.first(args[0]):
        return (args[1], nxt)
    return _FAIL


def _b_not(m, args, nxt, stack):
    goal = args[0]
    if not is_ground(m.resolve(goal)):
        m.diag.nonground_naf += 1
    mark = len(m.trail)
    found = m.first(goal)
    m.undo(mark)
    return _FAIL if found else nxt


def _b_unify(m, args, nxt, stack):
    return nxt if m.unify(args[0], args[1]) else _FAIL


def _b_not_unify(m, args, nxt, stack):
    mark = len(m.trail)
    ok = m.unify(args[0], args[1])
    m.undo(mark)
    return _FAIL if ok else nxt


def _b_identical(m, args, nxt, stack):
    return nxt if m.resolve(args[0]) == m.resolve(args[1]) else _FAIL


def _b_not_identical(m, args, nxt, stack):
    return _FAIL if m.resolve(args[0]) == m.resolve(args[1]) else nxt


def _b_is(m, args, nxt, stack):
    value = m.evaluate(args[1])
    return nxt if m.unify(args[0], Number(value)) else _FAIL


def _compare(op):
    def builtin(m, args, nxt, stack):
        return nxt if op(m.evaluate(args[0]), m.evaluate(args[1])) else _FAIL

    return builtin


def _b_ground(m, args, nxt, stack):
    return nxt if is_ground(m.resolve(args[0])) else _FAIL


_BUILTINS = {
    ("true", 0): _b_true,
    ("fail", 0): _b_fail,
    ("false", 0): _b_fail,
    (",", 2): _b_conj,
    (";", 2): _b_disj,
    ("->", 2): _b_ifthen,
    ("\\+", 1): _b_not,
    ("=", 2): _b_unify,
    ("\\=", 2): _b_not_unify,
    ("==", 2): _b_identical,
    ("\\==", 2): _b_not_identical,
    ("is", 2): _b_is,
    ("<", 2): _compare(lambda a, b: a < b),
    (">", 2): _compare(lambda a, b: a > b),
    ("=<", 2): _compare(lambda a, b: a <= b),
    (">=", 2): _compare(lambda a, b: a >= b),
    ("ground", 1): _b_ground,
}

BUILTIN_PREDICATES = frozenset(_BUILTINS)


# ------------------------------------------------------------------ queries


class Query:
    """Lazy solution sequence for one query.

    Iterating runs the search; ``diagnostics`` is filled in as it goes.
    A query can be iterated only once.
    """

    def __init__(self, engine: "Engine", goals: Sequence[Term], names: dict[str, Var] | None):
        self.goals = list(goals)
        if names is None:
            names = {}
            for g in self.goals:
                for v in _vars(g):
                    if v.name != "_" and v.name not in names:
                        names[v.name] = v
        self.names = names
        ids = [v.id for g in self.goals for v in _vars(g)]
        first_fresh = max(ids, default=-1) + 1
        self._machine = _Machine(engine.index, engine.limits, first_fresh)
        self._started = False

    @property
    def diagnostics(self) -> Diagnostics:
        return self._machine.diag

    def __iter__(self) -> Iterator[Solution]:
        if self._started:
            raise RuntimeError("a Query can only be iterated once")
        self._started = True
        m = self._machine
        cont = None
        for g in reversed(self.goals):
            cont = (g, cont)
        cap = m.limits.max_solutions
        own = set(self.names.values())
        count = 0
        try:
            for _ in m.run(cont):
                if cap is not None and count >= cap:
                    raise ResourceLimitError(f"solution limit of {cap} exceeded")
                bindings = {
                    name: _rename_free(m.resolve(v), own) for name, v in self.names.items()
                }
                yield Solution(bindings, count)
                count += 1
        except RecursionError:
            raise ResourceLimitError("recursion too deep for the host interpreter") from None
        unknown = m.diag.unknown_predicates
        if unknown:
            log.debug("unknown predicates called: %s", dict(unknown))

    def all(self) -> list[Solution]:
        return list(self)


def _rename_free(t: Term, own: set) -> Term:
    # engine-internal variables print as _G<n>; query variables keep their names
    if type(t) is Var:
        return t if t in own else Var(f"_G{t.id}", t.id)
    if type(t) is Compound:
        return Compound(t.functor, tuple(_rename_free(a, own) for a in t.args))
    return t


class Engine:
    """A program compiled for querying. Cheap to query many times."""

    def __init__(self, program: Program, limits: EngineLimits | None = None):
        self.program = program
        self.limits = limits or EngineLimits()
        self.index = _compile(program)

    def query(self, query: str | Sequence[Term]) -> Query:
        if isinstance(query, str):
            goals, names = parse_query(query)
            return Query(self, goals, names)
        return Query(self, query, None)

    def solve(self, query: str | Sequence[Term]) -> list[Solution]:
        return self.query(query).all()

    def succeeds(self, query: str | Sequence[Term]) -> bool:
        for _ in self.query(query):
            return True
        return False

    def defines(self, name: str, arity: int) -> bool:
        return (name, arity) in self.index


def game_independent_program() -> Program:
    program, report = parse_program(GAMMA_SOURCE, source_name="gamma")
    assert report.ok and not report.warnings
    return program


def with_gamma(game_program: Program) -> Program:
    return game_independent_program() + game_program


def unify(a: Term, b: Term, env: dict | None = None) -> dict | None:
    """Most general unifier of ``a`` and ``b`` extending ``env`` (occurs check on).

    Returns a new bindings dict, or ``None`` when the terms do not unify.
    """
    m = _Machine({}, EngineLimits(), 0)
    m.bindings = dict(env or {})
    if not m.unify(a, b):
        return None
    return m.bindings


def substitute(t: Term, env: dict) -> Term:
    m = _Machine({}, EngineLimits(), 0)
    m.bindings = env
    return m.resolve(t)


def solve(
    program: Program, query: str | Sequence[Term], limits: EngineLimits | None = None
) -> Query:
    return Engine(program, limits).query(query)


def holds_in(
    program: Program, fluent: Term, situation: Term, limits: EngineLimits | None = None
) -> bool:
    return Engine(program, limits).succeeds([mk("holds", fluent, situation)])


def trace_moves(trace: Term) -> list[tuple[Term, Term]]:
    """Chronological ``(player, move)`` pairs of a ground situation term."""
    moves = []
    t = trace
    while isinstance(t, Compound) and t.functor == "do" and len(t.args) == 2:
        m = t.args[0]
        if isinstance(m, Compound) and m.functor == "choice" and len(m.args) == 2:
            moves.append((m.args[0], m.args[1]))
        else:
            moves.append((m, m))
        t = t.args[1]
    moves.reverse()
    return moves


def initial_situation(trace: Term) -> Term:
    t = trace
    while isinstance(t, Compound) and t.functor == "do" and len(t.args) == 2:
        t = t.args[1]
    return t


def enumerate_outcomes(
    game_program: Program, limits: EngineLimits | None = None
) -> list[tuple[Term, Term]]:
    """All ``(final situation, outcome)`` pairs reachable in the game.

    ``game_program`` holds only the game-specific clauses; the
    game-independent rules are added here.
    """
    engine = Engine(with_gamma(game_program), limits)
    outcome_vars = [Var(n, i) for i, n in enumerate(("P1", "M1", "U1", "P2", "M2", "U2"))]
    outcome = Compound("outcome", tuple(outcome_vars))
    I = Var("I", 0)
    initials = []
    for sol in engine.query([mk("initial", I)]):
        init = sol.bindings["I"]
        if init not in initials:
            initials.append(init)
    if not initials:
        raise NoInitialError("no initial/1 fact: the initial situation is not declared")
    finals = 0
    seen = set()
    results = []
    F = Var("F", 0)
    for init in initials:
        for sol in engine.query([mk("game", init, F)]):
            final = sol.bindings["F"]
            finals += 1
            for osol in engine.query([mk("finally", outcome, final)]):
                out = Compound("outcome", tuple(osol.bindings[v.name] for v in outcome_vars))
                if not is_ground(out):
                    continue
                key = (format_term(final), format_term(out))
                if key in seen:
                    continue
                seen.add(key)
                results.append((final, out))
    if not results:
        if finals == 0:
            raise NoOutcomesError("no final situation is reachable from the initial situation")
        raise NoOutcomesError(
            f"{finals} final situations reached but no ground "
            "finally(outcome(P1,M1,U1,P2,M2,U2), S) is derivable"
        )
    return results
