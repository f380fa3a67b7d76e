"""Batch evaluation: formalize every description, grade it, and tabulate accuracy."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import CELLS, DescriptionRecord, Manifest
from .engine import EngineLimits
from .games import GameClass, SemanticVerdict, check_semantics
from .parser import parse_program
from .pipeline import ChatClient, FormalizationResult, LlmConfig, TranscriptWriter, formalize


@dataclass(frozen=True)
class Ratio:
    num: int = 0
    den: int = 0

    def __post_init__(self):
        if not 0 <= self.num <= self.den:
            raise ValueError(f"bad ratio {self.num}/{self.den}")

    @property
    def defined(self) -> bool:
        return self.den > 0

    @property
    def value(self) -> float | None:
        return self.num / self.den if self.den else None

    def __add__(self, other: "Ratio") -> "Ratio":
        return Ratio(self.num + other.num, self.den + other.den)

    def __str__(self) -> str:
        if not self.den:
            return "undefined (0/0)"
        return f"{self.value:.2f} ({self.num}/{self.den})"

    def to_dict(self) -> dict:
        return {"num": self.num, "den": self.den, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Ratio":
        return cls(d["num"], d["den"])


@dataclass(frozen=True)
class CellScore:
    syntactic: Ratio = Ratio()
    semantic: Ratio = Ratio()


@dataclass
class Row:
    id: str
    game_class: GameClass
    style: str
    payoffs: str
    status: str
    first_attempt_syntax_ok: bool
    attempts: int
    verdict: SemanticVerdict | None = None
    excluded: str | None = None

    @property
    def semantic_ok(self) -> bool | None:
        return None if self.verdict is None else self.verdict.ok

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "game_class": self.game_class.value,
            "style": self.style,
            "payoffs": self.payoffs,
            "status": self.status,
            "first_attempt_syntax_ok": self.first_attempt_syntax_ok,
            "attempts": self.attempts,
            "semantic_ok": self.semantic_ok,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "excluded": self.excluded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Row":
        v = d.get("verdict")
        return cls(
            d["id"],
            GameClass(d["game_class"]),
            d["style"],
            d["payoffs"],
            d["status"],
            d["first_attempt_syntax_ok"],
            d["attempts"],
            SemanticVerdict.from_dict(v) if v else None,
            d.get("excluded"),
        )


@dataclass
class EvalReport:
    cells: dict[tuple[str, str], CellScore]
    per_class: dict[GameClass, Ratio]
    per_class_non_standard: dict[GameClass, Ratio]
    exclusions: list[tuple[str, str]]
    rows: list[Row] = field(default_factory=list)

    @property
    def syntactic(self) -> Ratio:
        return sum((c.syntactic for c in self.cells.values()), Ratio())

    @property
    def semantic(self) -> Ratio:
        return sum((c.semantic for c in self.cells.values()), Ratio())

    def to_dict(self) -> dict:
        return {
            "overall": {
                "syntactic_accuracy": self.syntactic.to_dict(),
                "semantic_accuracy": self.semantic.to_dict(),
            },
            "cells": [
                {
                    "style": s,
                    "payoffs": p,
                    "syntactic_accuracy": self.cells[s, p].syntactic.to_dict(),
                    "semantic_accuracy": self.cells[s, p].semantic.to_dict(),
                }
                for s, p in CELLS
            ],
            "per_class": {c.value: r.to_dict() for c, r in self.per_class.items()},
            "per_class_non_standard": {
                c.value: r.to_dict() for c, r in self.per_class_non_standard.items()
            },
            "exclusions": [{"id": i, "reason": r} for i, r in self.exclusions],
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            cells={
                (c["style"], c["payoffs"]): CellScore(
                    Ratio.from_dict(c["syntactic_accuracy"]), Ratio.from_dict(c["semantic_accuracy"])
                )
                for c in d["cells"]
            },
            per_class={GameClass(k): Ratio.from_dict(v) for k, v in d["per_class"].items()},
            per_class_non_standard={
                GameClass(k): Ratio.from_dict(v) for k, v in d["per_class_non_standard"].items()
            },
            exclusions=[(x["id"], x["reason"]) for x in d["exclusions"]],
            rows=[Row.from_dict(r) for r in d["rows"]],
        )


def grade(
    record: DescriptionRecord,
    result: FormalizationResult,
    limits: EngineLimits | None = None,
    require_zero_sum: bool = True,
) -> Row:
    row = Row(
        record.id,
        record.game_class,
        record.style,
        record.payoffs,
        result.status,
        result.first_attempt_syntax_ok,
        len(result.attempts),
    )
    if record.excluded:
        row.excluded = record.notes
    elif result.final_program is None:
        row.excluded = f"no syntactically valid program ({result.status})"
    else:
        program, _ = parse_program(result.final_program, source_name=record.id)
        row.verdict = check_semantics(
            program, record.game_class, limits, require_zero_sum=require_zero_sum
        )
    return row


def aggregate(rows: list[Row]) -> EvalReport:
    cells = {}
    for cell in CELLS:
        mine = [r for r in rows if (r.style, r.payoffs) == cell]
        synt = Ratio(sum(r.first_attempt_syntax_ok for r in mine), len(mine))
        scored = [r for r in mine if r.verdict is not None]
        sem = Ratio(sum(r.verdict.ok for r in scored), len(scored))
        cells[cell] = CellScore(synt, sem)

    def by_class(subset):
        out = {}
        for c in GameClass:
            scored = [r for r in subset if r.game_class is c and r.verdict is not None]
            if scored or any(r.game_class is c for r in subset):
                out[c] = Ratio(sum(r.verdict.ok for r in scored), len(scored))
        return out

    return EvalReport(
        cells=cells,
        per_class=by_class(rows),
        per_class_non_standard=by_class([r for r in rows if r.style == "non_standard"]),
        exclusions=[(r.id, r.excluded) for r in rows if r.excluded],
        rows=rows,
    )


def evaluate(
    manifest: Manifest,
    llm: ChatClient,
    cfg: LlmConfig,
    gamma: str,
    example: tuple[str, str] | None,
    *,
    transcript: TranscriptWriter | None = None,
    workers: int = 4,
    limits: EngineLimits | None = None,
    require_zero_sum: bool = True,
) -> EvalReport:
    """Formalize and grade every record; rows keep manifest order."""

    def one(record):
        result = formalize(record, llm, cfg, gamma, example, transcript)
        return grade(record, result, limits, require_zero_sum), result

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        done = list(pool.map(one, manifest.records))
    return aggregate([row for row, _ in done])


_LABELS = {
    "standard": "Standard",
    "non_standard": "Non-standard",
    "numerical": "Numerical",
    "non_numerical": "Non-numerical",
}


def _fmt(r: Ratio) -> str:
    return f"{r.value:.2f} ({r.num}/{r.den})" if r.den else "undefined (0/0)"


def _bar(r: Ratio, width: int = 20) -> str:
    return "" if not r.den else "█" * round(width * r.value)


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, ensure_ascii=False)
    if fmt != "markdown":
        raise ValueError(f"unknown report format {fmt!r}")
    out = [
        "# Evaluation report",
        "",
        f"Syntactic accuracy (first attempt): {_fmt(report.syntactic)}",
        f"Semantic accuracy: {_fmt(report.semantic)}",
        "",
        "## Accuracy by variant",
        "",
        "| | Standard synt | Standard sem | Non-standard synt | Non-standard sem |",
        "|---|---|---|---|---|",
    ]
    for p in ("numerical", "non_numerical"):
        c_std, c_ns = report.cells["standard", p], report.cells["non_standard", p]
        out.append(
            f"| {_LABELS[p]} | {_fmt(c_std.syntactic)} | {_fmt(c_std.semantic)} "
            f"| {_fmt(c_ns.syntactic)} | {_fmt(c_ns.semantic)} |"
        )
    for title, table in (
        ("Semantic accuracy by game (all descriptions)", report.per_class),
        ("Semantic accuracy by game (non-standard descriptions)", report.per_class_non_standard),
    ):
        out += ["", f"## {title}", "", "| Game | Accuracy | |", "|---|---|---|"]
        for c, r in table.items():
            out.append(f"| {c.short} | {_fmt(r)} | {_bar(r)} |")
    out += ["", "## Exclusions", ""]
    if report.exclusions:
        out += [f"- `{i}`: {reason}" for i, reason in report.exclusions]
    else:
        out.append("None.")
    return "\n".join(out) + "\n"
