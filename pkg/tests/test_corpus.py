import json

import pytest

from gameform.corpus import (
    BENCHMARK_SHAPE,
    DescriptionRecord,
    DuplicateIdError,
    Manifest,
    ManifestError,
    dumps_manifest,
    load_manifest,
    load_seed,
    benchmark_shape,
    save_manifest,
    seed_manifest_path,
)
from gameform.games import CLASSIC, GameClass, check_semantics


def line(**kw):
    base = {"id": "x", "game_class": "hawk_dove", "style": "standard", "payoffs": "numerical",
            "text": "Two birds.", "notes": None, "excluded": False}
    base.update(kw)
    return json.dumps(base) + "\n"


def test_seed_manifest_coverage():
    m = load_seed()
    assert len(m) >= 12
    std = {(r.game_class, r.payoffs) for r in m if r.style == "standard"}
    for cls in CLASSIC:
        assert (cls, "numerical") in std and (cls, "non_numerical") in std
    classes = {r.game_class for r in m}
    assert GameClass.SEQUENTIAL_PD in classes and GameClass.ROCK_PAPER_SCISSORS in classes
    ns = [r for r in m if r.style == "non_standard" and not r.excluded]
    for cls in CLASSIC:
        assert sum(r.game_class is cls for r in ns) == 2


def test_seed_gold_programs_pass_their_class():
    m = load_seed()
    for r in m:
        gold = m.gold_program(r.id)
        if r.excluded:
            assert r.notes
            continue
        assert gold is not None, r.id
        v = check_semantics(gold, r.game_class)
        assert v.ok, (r.id, v.defects)


def test_seed_is_not_benchmark_shaped():
    assert not benchmark_shape(load_seed())


def test_benchmark_shape_synthetic():
    records = []
    for (style, payoffs), n in BENCHMARK_SHAPE.items():
        records += [DescriptionRecord(f"{style}-{payoffs}-{i}", "pd", style, payoffs, "t") for i in range(n)]
    assert len(records) == 110 and benchmark_shape(Manifest(records))
    wrong = [DescriptionRecord(f"r{i}", "pd", "standard", "numerical", "t") for i in range(110)]
    assert not benchmark_shape(Manifest(wrong))


def test_round_trip_is_byte_stable(tmp_path):
    src = seed_manifest_path().read_text(encoding="utf-8")
    out = tmp_path / "m.jsonl"
    save_manifest(load_seed(), out)
    assert out.read_text(encoding="utf-8") == src
    assert dumps_manifest(load_manifest(out)) == src


def test_duplicate_id(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(line(id="a") + line(id="a"))
    with pytest.raises(DuplicateIdError, match=":2:"):
        load_manifest(p)


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    m = load_manifest(p)
    assert len(m) == 0 and set(m.counts.values()) == {0}


def test_parse_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(line(id="a") + "{not json\n")
    with pytest.raises(ManifestError, match=":2:"):
        load_manifest(p)
    p.write_text(line(id="a", style="weird"))
    with pytest.raises(ManifestError, match=":1:.*style"):
        load_manifest(p)
    p.write_text(line(id="a", text="  "))
    with pytest.raises(ManifestError):
        load_manifest(p)


def test_excluded_record_needs_reason():
    with pytest.raises(ValueError):
        DescriptionRecord("a", "pd", "standard", "numerical", "t", None, True)
    r = DescriptionRecord("a", "pd", "standard", "numerical", "t", "ambiguous", True)
    assert r.game_class is GameClass.PRISONERS_DILEMMA


def test_counts_are_computed():
    m = Manifest([DescriptionRecord("a", "pd", "non_standard", "non_numerical", "t")])
    assert m.counts[("non_standard", "non_numerical")] == 1
    assert sum(m.counts.values()) == 1
