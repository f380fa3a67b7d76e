"""Game-description manifests and the shipped seed corpus.

A manifest is a JSON-lines file with one description per line::

    {"id": "pd_std_num", "game_class": "prisoners_dilemma", "style": "standard",
     "payoffs": "numerical", "text": "...", "notes": null, "excluded": false}

Records marked ``excluded`` stay in the manifest but are left out of semantic
scoring; ``notes`` must then say why. A hand-written reference program for a
record lives next to the manifest as ``gold/<id>.pl``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .games import GameClass
from .parser import Program, parse_program

STYLES = ("standard", "non_standard")
PAYOFF_KINDS = ("numerical", "non_numerical")
CELLS = tuple((s, p) for s in STYLES for p in PAYOFF_KINDS)

BENCHMARK_SHAPE = {
    ("standard", "numerical"): 5,
    ("standard", "non_numerical"): 5,
    ("non_standard", "numerical"): 50,
    ("non_standard", "non_numerical"): 50,
}

_FIELDS = ("id", "game_class", "style", "payoffs", "text", "notes", "excluded")


class ManifestError(ValueError):
    kind = "manifest_error"


class DuplicateIdError(ManifestError):
    kind = "duplicate_id"


@dataclass(frozen=True)
class DescriptionRecord:
    id: str
    game_class: GameClass
    style: str
    payoffs: str
    text: str
    notes: str | None = None
    excluded: bool = False

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not isinstance(self.game_class, GameClass):
            object.__setattr__(self, "game_class", GameClass.parse(self.game_class))
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}, got {self.style!r}")
        if self.payoffs not in PAYOFF_KINDS:
            raise ValueError(f"payoffs must be one of {PAYOFF_KINDS}, got {self.payoffs!r}")
        if not self.text.strip():
            raise ValueError(f"record {self.id}: text must be non-empty")
        if self.excluded and not (self.notes or "").strip():
            raise ValueError(f"record {self.id}: excluded records need a reason in notes")

    @property
    def cell(self) -> tuple[str, str]:
        return self.style, self.payoffs

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "game_class": self.game_class.value,
            "style": self.style,
            "payoffs": self.payoffs,
            "text": self.text,
            "notes": self.notes,
            "excluded": self.excluded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DescriptionRecord":
        unknown = set(d) - set(_FIELDS)
        if unknown:
            raise ValueError(f"unknown fields: {', '.join(sorted(unknown))}")
        missing = [k for k in _FIELDS[:5] if k not in d]
        if missing:
            raise ValueError(f"missing fields: {', '.join(missing)}")
        return cls(**d)


@dataclass
class Manifest:
    records: list[DescriptionRecord] = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DuplicateIdError(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def counts(self) -> dict[tuple[str, str], int]:
        c = Counter(r.cell for r in self.records)
        return {cell: c.get(cell, 0) for cell in CELLS}

    def get(self, record_id: str) -> DescriptionRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    def gold_path(self, record_id: str) -> Path | None:
        if self.root is None:
            return None
        p = self.root / "gold" / f"{record_id}.pl"
        return p if p.exists() else None

    def gold_program(self, record_id: str) -> Program | None:
        p = self.gold_path(record_id)
        if p is None:
            return None
        program, report = parse_program(p.read_text("utf-8"), source_name=p.name)
        if not report.ok:
            raise ManifestError(f"gold program {p} has syntax errors")
        return program


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    records = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = DescriptionRecord.from_dict(json.loads(line))
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{n}: invalid JSON: {e.msg}") from None
            except (TypeError, ValueError) as e:
                raise ManifestError(f"{path}:{n}: {e}") from None
            if rec.id in seen:
                raise DuplicateIdError(
                    f"{path}:{n}: duplicate id {rec.id!r} (first on line {seen[rec.id]})"
                )
            seen[rec.id] = n
            records.append(rec)
    return Manifest(records, path.parent)


def dumps_manifest(manifest: Manifest) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in manifest.records)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding="utf-8")


def benchmark_shape(manifest: Manifest) -> bool:
    return manifest.counts == BENCHMARK_SHAPE


def seed_manifest_path() -> Path:
    return Path(str(resources.files("gameform.data.corpus").joinpath("seed.jsonl")))


def load_seed() -> Manifest:
    return load_manifest(seed_manifest_path())


def default_example() -> tuple[str, str]:
    """The one-shot example: the standard numerical Prisoner's Dilemma and its program."""
    from .games import canonical_source

    return load_seed().get("pd_std_num").text, canonical_source(GameClass.PRISONERS_DILEMMA)
