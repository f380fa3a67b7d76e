"""Canonical game programs, payoff-matrix extraction and game classification.

A 2x2 game is classified by the order of its four outcomes seen from each
player. With moves labelled Cooperate/Defect, the row player's outcomes are

    R = u(C, C)   S = u(C, D)   T = u(D, C)   P = u(D, D)

and the column player's are the mirror image (its T is the cell where it
defects against a cooperating row player). Since generated programs name moves
freely, every assignment of the C/D labels to the two moves of each player is
tried.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

from .engine import (
    Engine,
    EngineError,
    EngineLimits,
    enumerate_outcomes,
    trace_moves,
    with_gamma,
)
from .parser import Program, parse_program
from .terms import Atom, Number, Term, Var, format_term, mk


class GameClass(str, enum.Enum):
    PRISONERS_DILEMMA = "prisoners_dilemma"
    HAWK_DOVE = "hawk_dove"
    MATCHING_PENNIES = "matching_pennies"
    STAG_HUNT = "stag_hunt"
    BATTLE_OF_SEXES = "battle_of_sexes"
    SEQUENTIAL_PD = "sequential_pd"
    ROCK_PAPER_SCISSORS = "rock_paper_scissors"

    @classmethod
    def parse(cls, name: str) -> "GameClass":
        key = name.strip().lower().replace("-", "_").replace(" ", "_").replace("'", "")
        key = _ALIASES.get(key, key)
        return cls(key)

    @property
    def short(self) -> str:
        return _SHORT[self]


_SHORT = {
    GameClass.PRISONERS_DILEMMA: "PD",
    GameClass.HAWK_DOVE: "HD",
    GameClass.MATCHING_PENNIES: "MP",
    GameClass.STAG_HUNT: "SH",
    GameClass.BATTLE_OF_SEXES: "BS",
    GameClass.SEQUENTIAL_PD: "seqPD",
    GameClass.ROCK_PAPER_SCISSORS: "RPS",
}
_ALIASES = {s.lower(): c.value for c, s in _SHORT.items()}
_ALIASES.update(
    {
        "prisoner_dilemma": "prisoners_dilemma",
        "battle_of_the_sexes": "battle_of_sexes",
        "sequential_prisoners_dilemma": "sequential_pd",
        "rps": "rock_paper_scissors",
    }
)

CLASSIC = (
    GameClass.PRISONERS_DILEMMA,
    GameClass.HAWK_DOVE,
    GameClass.MATCHING_PENNIES,
    GameClass.STAG_HUNT,
    GameClass.BATTLE_OF_SEXES,
)

# (greater, lesser) pairs per perspective; all strict by default
_ORDERINGS = {
    GameClass.PRISONERS_DILEMMA: {
        "row": [("T", "R"), ("R", "P"), ("P", "S")],
        "col": [("T", "R"), ("R", "P"), ("P", "S")],
    },
    GameClass.HAWK_DOVE: {
        "row": [("T", "R"), ("R", "S"), ("S", "P")],
        "col": [("T", "R"), ("R", "S"), ("S", "P")],
    },
    GameClass.STAG_HUNT: {
        "row": [("R", "T"), ("T", "P"), ("P", "S")],
        "col": [("R", "T"), ("T", "P"), ("P", "S")],
    },
    GameClass.BATTLE_OF_SEXES: {
        "row": [("R", "P"), ("P", "T"), ("P", "S")],
        "col": [("P", "R"), ("R", "T"), ("R", "S")],
    },
    GameClass.MATCHING_PENNIES: {
        "row": [("R", "T"), ("R", "S"), ("P", "T"), ("P", "S")],
        "col": [("T", "R"), ("T", "P"), ("S", "R"), ("S", "P")],
    },
}

DEFECT_KINDS = (
    "ordering_violation",
    "extraction_failure",
    "wrong_shape",
    "asymmetry_violation",
    "zero_sum_violation",
)


def canonical_source(game: GameClass) -> str:
    return resources.files("gameform.data.games").joinpath(f"{game.value}.pl").read_text("utf-8")


def canonical_game(game: GameClass) -> Program:
    program, report = parse_program(canonical_source(game), source_name=f"{game.value}.pl")
    assert report.ok, report.errors
    return program


# ------------------------------------------------------------------ matrices


def _label(t: Term) -> str:
    return t.name if isinstance(t, Atom) else format_term(t)


def _json_number(v):
    return v if isinstance(v, int) else str(v)


@dataclass
class PayoffMatrix:
    row_actions: list[str]
    col_actions: list[str]
    cells: dict[tuple[str, str], tuple]
    row_player: str = "row"
    col_player: str = "col"

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_actions), len(self.col_actions)

    def u_row(self, r: str, c: str):
        return self.cells[r, c][0]

    def u_col(self, r: str, c: str):
        return self.cells[r, c][1]

    @classmethod
    def from_cells(cls, cells: dict, row_player: str = "row", col_player: str = "col"):
        rows, cols = [], []
        for r, c in cells:
            if r not in rows:
                rows.append(r)
            if c not in cols:
                cols.append(c)
        return cls(rows, cols, dict(cells), row_player, col_player)

    def to_dict(self) -> dict:
        return {
            "row_player": self.row_player,
            "col_player": self.col_player,
            "row_actions": list(self.row_actions),
            "col_actions": list(self.col_actions),
            "cells": [
                {"row": r, "col": c, "payoff": [_json_number(u) for u in self.cells[r, c]]}
                for r in self.row_actions
                for c in self.col_actions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PayoffMatrix":
        cells = {
            (x["row"], x["col"]): tuple(Number(Fraction(u)).value for u in x["payoff"])
            for x in d["cells"]
        }
        return cls(
            list(d["row_actions"]),
            list(d["col_actions"]),
            cells,
            d.get("row_player", "row"),
            d.get("col_player", "col"),
        )

    def transform(self, player: int, scale, shift) -> "PayoffMatrix":
        """Apply ``u -> scale*u + shift`` to one player's payoffs (0 row, 1 col)."""
        cells = {}
        for k, (a, b) in self.cells.items():
            if player == 0:
                a = Number(Fraction(scale) * a + Fraction(shift)).value
            else:
                b = Number(Fraction(scale) * b + Fraction(shift)).value
            cells[k] = (a, b)
        return PayoffMatrix(list(self.row_actions), list(self.col_actions), cells,
                            self.row_player, self.col_player)


class ExtractionError(Exception):
    def __init__(self, cause: str, message: str):
        super().__init__(message)
        self.cause = cause


def extract_matrix(game_program: Program, limits: EngineLimits | None = None) -> PayoffMatrix:
    """Run the game and tabulate every outcome by the joint move profile."""
    try:
        outcomes = enumerate_outcomes(game_program, limits)
    except EngineError as e:
        raise ExtractionError(e.kind, str(e)) from e
    cells: dict = {}
    rows: list[str] = []
    cols: list[str] = []
    players = None
    for trace, out in outcomes:
        p1, m1, u1, p2, m2, u2 = out.args
        if players is None:
            players = (p1, p2)
        elif players != (p1, p2):
            raise ExtractionError(
                "inconsistent_roles",
                f"row/column players differ between outcomes: {format_term(out)}",
            )
        if not isinstance(u1, Number) or not isinstance(u2, Number):
            raise ExtractionError("non_numeric", f"payoffs must be numbers: {format_term(out)}")
        r, c = _label(m1), _label(m2)
        if r not in rows:
            rows.append(r)
        if c not in cols:
            cols.append(c)
        cell = (u1.value, u2.value)
        old = cells.setdefault((r, c), cell)
        if old != cell:
            raise ExtractionError(
                "conflict",
                f"profile ({r}, {c}) has conflicting payoffs {old} and {cell}",
            )
    missing = [(r, c) for r in rows for c in cols if (r, c) not in cells]
    if missing:
        r, c = missing[0]
        raise ExtractionError("incomplete", f"no outcome for profile ({r}, {c})")
    return PayoffMatrix(rows, cols, cells, _label(players[0]), _label(players[1]))


# ------------------------------------------------------------------ classify


def _quads(m: PayoffMatrix, rc: str, rd: str, cc: str, cd: str) -> dict[str, dict]:
    return {
        "row": {"R": m.u_row(rc, cc), "S": m.u_row(rc, cd), "T": m.u_row(rd, cc), "P": m.u_row(rd, cd)},
        "col": {"R": m.u_col(rc, cc), "S": m.u_col(rd, cc), "T": m.u_col(rc, cd), "P": m.u_col(rd, cd)},
    }


def _labelings(m: PayoffMatrix):
    r0, r1 = m.row_actions
    c0, c1 = m.col_actions
    for rc, rd in ((r0, r1), (r1, r0)):
        for cc, cd in ((c0, c1), (c1, c0)):
            yield rc, rd, cc, cd


def _order_violations(game: GameClass, quads: dict, strict: bool) -> list[str]:
    out = []
    for side in ("row", "col"):
        q = quads[side]
        for hi, lo in _ORDERINGS[game][side]:
            a, b = q[hi], q[lo]
            if a > b or (not strict and a == b):
                continue
            rel = "tie" if a == b else "reversed"
            out.append(f"{side}: {hi}={_fmt(a)} not > {lo}={_fmt(b)} ({rel})")
    return out


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else str(Fraction(v))


def zero_sum_violations(m: PayoffMatrix) -> list[str]:
    return [
        f"cell ({r}, {c}) sums to {_fmt(a + b)}"
        for (r, c), (a, b) in m.cells.items()
        if a + b != 0
    ]


def _rps_violations(m: PayoffMatrix) -> list[tuple[str, str]]:
    if m.shape != (3, 3) or set(m.row_actions) != set(m.col_actions):
        return [("wrong_shape", f"expected a 3x3 matrix over one move set, got {m.shape[0]}x{m.shape[1]}")]
    defects = [("zero_sum_violation", d) for d in zero_sum_violations(m)]
    best = None
    a0 = m.row_actions[0]
    for b, c in itertools.permutations(m.row_actions[1:]):
        cycle = (a0, b, c)
        bad = []
        for x, y in zip(cycle, cycle[1:] + cycle[:1]):
            if not m.u_row(x, y) > 0:
                bad.append(f"{x} should beat {y}: row payoff {_fmt(m.u_row(x, y))} not > 0")
            if not m.u_row(y, x) < 0:
                bad.append(f"{y} should lose to {x}: row payoff {_fmt(m.u_row(y, x))} not < 0")
        if best is None or len(bad) < len(best):
            best = bad
    defects += [("ordering_violation", d) for d in best]
    return defects


def classify(
    matrix: PayoffMatrix, *, require_zero_sum: bool = True, strict: bool = True
) -> set[GameClass]:
    """Every game class whose defining payoff order the matrix satisfies."""
    found: set[GameClass] = set()
    if matrix.shape == (2, 2):
        zero_sum = not zero_sum_violations(matrix)
        for game in CLASSIC:
            if game is GameClass.MATCHING_PENNIES and require_zero_sum and not zero_sum:
                continue
            for lab in _labelings(matrix):
                if not _order_violations(game, _quads(matrix, *lab), strict):
                    found.add(game)
                    break
    elif matrix.shape == (3, 3) and not _rps_violations(matrix):
        found.add(GameClass.ROCK_PAPER_SCISSORS)
    return found


# ------------------------------------------------------------------ verdicts


@dataclass
class Defect:
    kind: str
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass
class SemanticVerdict:
    ok: bool
    expected: GameClass
    detected_classes: set[GameClass] = field(default_factory=set)
    defects: list[Defect] = field(default_factory=list)
    matrix: PayoffMatrix | None = None

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "expected": self.expected.value,
            "detected_classes": sorted(c.value for c in self.detected_classes),
            "defects": [d.to_dict() for d in self.defects],
            "matrix": self.matrix.to_dict() if self.matrix else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticVerdict":
        return cls(
            ok=d["ok"],
            expected=GameClass(d["expected"]),
            detected_classes={GameClass(c) for c in d["detected_classes"]},
            defects=[Defect(x["kind"], x["detail"]) for x in d["defects"]],
            matrix=PayoffMatrix.from_dict(d["matrix"]) if d.get("matrix") else None,
        )


def turn_structure_problems(game_program: Program, limits: EngineLimits | None = None) -> list[str]:
    """Check that exactly one player moves first and the other answers."""
    engine = Engine(with_gamma(game_program), limits)
    I, P = Var("I", 0), Var("P", 1)
    problems = []
    first_movers = set()
    for sol in engine.query([mk("initial", I), mk("holds", mk("control", P), I)]):
        first_movers.add(format_term(sol.bindings["P"]))
    if len(first_movers) != 1:
        problems.append(
            f"expected exactly one player in control initially, found {len(first_movers)}"
            + (f" ({', '.join(sorted(first_movers))})" if first_movers else "")
        )
    for trace, _ in enumerate_outcomes(game_program, limits):
        moves = trace_moves(trace)
        players = [format_term(p) for p, _ in moves]
        if len(players) != 2 or players[0] == players[1]:
            problems.append(f"history {format_term(trace)} is not one move per player")
            break
        if len(first_movers) == 1 and players[0] not in first_movers:
            problems.append(f"history {format_term(trace)} starts with the second mover")
            break
    return problems


_SYMMETRIC = {
    GameClass.PRISONERS_DILEMMA,
    GameClass.HAWK_DOVE,
    GameClass.STAG_HUNT,
    GameClass.SEQUENTIAL_PD,
}


def _asymmetries(m: PayoffMatrix) -> list[str]:
    if m.row_actions != m.col_actions:
        return ["row and column players have different move sets"]
    return [
        f"u_row({r}, {c})={_fmt(m.u_row(r, c))} but u_col({c}, {r})={_fmt(m.u_col(c, r))}"
        for r in m.row_actions
        for c in m.col_actions
        if m.u_row(r, c) != m.u_col(c, r)
    ]


def check_semantics(
    game_program: Program,
    expected: GameClass,
    limits: EngineLimits | None = None,
    *,
    require_zero_sum: bool = True,
    strict: bool = True,
    require_symmetry: bool = False,
) -> SemanticVerdict:
    """Execute the game, read off its payoff matrix and compare with ``expected``."""
    try:
        matrix = extract_matrix(game_program, limits)
    except ExtractionError as e:
        return SemanticVerdict(False, expected, set(), [Defect("extraction_failure", f"{e.cause}: {e}")])

    detected = classify(matrix, require_zero_sum=require_zero_sum, strict=strict)
    defects: list[Defect] = []
    as_2x2 = GameClass.PRISONERS_DILEMMA if expected is GameClass.SEQUENTIAL_PD else expected

    if expected is GameClass.SEQUENTIAL_PD or GameClass.PRISONERS_DILEMMA in detected:
        try:
            turns = turn_structure_problems(game_program, limits)
        except EngineError as e:
            turns = [f"{e.kind}: {e}"]
        if GameClass.PRISONERS_DILEMMA in detected and not turns:
            detected.add(GameClass.SEQUENTIAL_PD)
        if expected is GameClass.SEQUENTIAL_PD:
            defects += [Defect("wrong_shape", f"turn order: {t}") for t in turns]

    if expected is GameClass.ROCK_PAPER_SCISSORS:
        if expected not in detected:
            defects += [Defect(k, d) for k, d in _rps_violations(matrix)]
    elif matrix.shape != (2, 2):
        defects.append(
            Defect("wrong_shape", f"expected a 2x2 matrix, got {matrix.shape[0]}x{matrix.shape[1]}")
        )
    elif as_2x2 not in detected:
        best = min(
            (_order_violations(as_2x2, _quads(matrix, *lab), strict) for lab in _labelings(matrix)),
            key=len,
        )
        defects += [Defect("ordering_violation", d) for d in best]
        if as_2x2 is GameClass.MATCHING_PENNIES and require_zero_sum:
            defects += [Defect("zero_sum_violation", d) for d in zero_sum_violations(matrix)]

    if require_symmetry and expected in _SYMMETRIC and matrix.shape == (2, 2):
        defects += [Defect("asymmetry_violation", d) for d in _asymmetries(matrix)]

    ok = expected in detected and not defects
    return SemanticVerdict(ok, expected, detected, defects, matrix)


_SIMULTANEOUS = """\
% {title}
initial(s0).

initially(player({p}), s0).
initially(player({q}), s0).
initially(role({p},row), s0).
initially(role({q},col), s0).
initially(control({p}), s0).
initially(control({q}), s0).

{possible}
legal(choice(P,M), S):-
    possible(choice(P,M), S),
    holds(control(P), S).

effect(did(P, M), choice(P, M), S).

abnormal(control(P), choice(P, M), S).

final(S):-
    ground(S),
    S=do(choice(_,_), do(choice(_,_), I)),
    initial(I).

{payoffs}
finally(outcome(P1,M1,U1,P2,M2,U2), S):-
    final(S),
    holds(role(P1, row), S),
    holds(did(P1, M1), S),
    holds(role(P2, col), S),
    holds(did(P2, M2), S),
    payoff(M1, M2, U1, U2).

finally(goal(P1, U1), S):-
    finally(outcome(P1,_,U1,_,_,_), S).
finally(goal(P2, U2), S):-
    finally(outcome(_,_,_,P2,_,U2), S).
"""


def simultaneous_game_source(
    title: str, players: tuple[str, str], moves: list[str], payoffs: dict
) -> str:
    """Render a two-player simultaneous game in the layout of the canonical programs.

    ``payoffs`` maps ``(row_move, col_move)`` to ``(u_row, u_col)``.
    """
    p, q = players
    possible = "".join(
        f"possible(choice(P,{format_term(Atom(m))}), S):-\n    holds(player(P), S).\n" for m in moves
    )
    table = "".join(
        f"payoff({format_term(Atom(a))}, {format_term(Atom(b))}, "
        f"{format_term(Number(Fraction(u)))}, {format_term(Number(Fraction(v)))}).\n"
        for (a, b), (u, v) in payoffs.items()
    )
    return _SIMULTANEOUS.format(title=title, p=p, q=q, possible=possible, payoffs=table)
