import pytest

from gameform.engine import EngineLimits, holds_in, with_gamma
from gameform.games import (
    CLASSIC,
    ExtractionError,
    GameClass,
    PayoffMatrix,
    SemanticVerdict,
    canonical_game,
    canonical_source,
    check_semantics,
    classify,
    extract_matrix,
    zero_sum_violations,
)
from gameform.parser import parse_program, parse_term
from gameform.terms import Atom

from helpers import TABLES, defective_source, fixture_text, game_source


def program(src):
    p, report = parse_program(src)
    assert report.ok
    return p


def test_game_class_parse_aliases():
    assert GameClass.parse("PD") is GameClass.PRISONERS_DILEMMA
    assert GameClass.parse("battle-of-sexes") is GameClass.BATTLE_OF_SEXES
    assert GameClass.parse("Stag Hunt") is GameClass.STAG_HUNT
    with pytest.raises(ValueError):
        GameClass.parse("chess")


def test_canonical_pd_contains_paper_fact():
    assert "payoff('C', 'C', 65, 65)." in canonical_source(GameClass.PRISONERS_DILEMMA)


def test_canonical_rps_has_three_possible_clauses():
    preds = canonical_game(GameClass.ROCK_PAPER_SCISSORS).predicates()
    assert len(preds[("possible", 2)]) == 3


def test_sequential_pd_has_single_initial_control():
    p = with_gamma(canonical_game(GameClass.SEQUENTIAL_PD))
    assert holds_in(p, parse_term("control(a)"), Atom("s0"))
    assert not holds_in(p, parse_term("control(b)"), Atom("s0"))


def test_extract_pd_matrix():
    m = extract_matrix(canonical_game(GameClass.PRISONERS_DILEMMA))
    assert m.shape == (2, 2)
    assert m.cells == {
        ("C", "C"): (65, 65),
        ("C", "D"): (10, 100),
        ("D", "C"): (100, 10),
        ("D", "D"): (35, 35),
    }
    assert (m.row_player, m.col_player) == ("p1", "p2")


def test_extract_rps_matrix_is_zero_sum_3x3():
    m = extract_matrix(canonical_game(GameClass.ROCK_PAPER_SCISSORS))
    assert m.shape == (3, 3)
    assert all(a + b == 0 for a, b in m.cells.values())


def test_payoff_rd_fixture_has_no_outcomes():
    with pytest.raises(ExtractionError) as e:
        extract_matrix(program(fixture_text("payoff_rd.pl")))
    assert e.value.cause == "no_outcomes"


def test_conflicting_payoffs_are_rejected():
    src = canonical_source(GameClass.PRISONERS_DILEMMA) + "payoff('C', 'C', 1, 1).\n"
    with pytest.raises(ExtractionError) as e:
        extract_matrix(program(src))
    assert e.value.cause == "conflict"


def test_symbolic_payoffs_are_rejected():
    src = canonical_source(GameClass.PRISONERS_DILEMMA).replace(
        "payoff('C', 'C', 65, 65)", "payoff('C', 'C', high, high)"
    )
    with pytest.raises(ExtractionError) as e:
        extract_matrix(program(src))
    assert e.value.cause == "non_numeric"


def test_resource_limit_is_an_extraction_failure():
    v = check_semantics(
        canonical_game(GameClass.PRISONERS_DILEMMA),
        GameClass.PRISONERS_DILEMMA,
        EngineLimits(max_inference_steps=50),
    )
    assert not v.ok and v.defects[0].kind == "extraction_failure"
    assert v.defects[0].detail.startswith("resource_limit")


@pytest.mark.parametrize("cls", CLASSIC)
def test_canonical_soundness(cls):
    found = classify(extract_matrix(canonical_game(cls)))
    assert found & set(CLASSIC) == {cls}


def test_classify_examples():
    sh = PayoffMatrix.from_cells(
        {("C", "C"): (3, 3), ("C", "D"): (0, 2), ("D", "C"): (2, 0), ("D", "D"): (1, 1)}
    )
    assert classify(sh) == {GameClass.STAG_HUNT}
    flat = PayoffMatrix.from_cells({(r, c): (0, 0) for r in "CD" for c in "CD"})
    assert classify(flat) == set()


def test_labels_are_discovered():
    m = PayoffMatrix.from_cells(
        {("Stay", "Stay"): (3, 3), ("Stay", "Leave"): (0, 5),
         ("Leave", "Stay"): (5, 0), ("Leave", "Leave"): (1, 1)}
    )
    assert classify(m) == {GameClass.PRISONERS_DILEMMA}


def test_mp_zero_sum_switch():
    m = PayoffMatrix.from_cells(
        {("H", "H"): (2, 0), ("H", "T"): (0, 2), ("T", "H"): (0, 2), ("T", "T"): (2, 0)}
    )
    assert zero_sum_violations(m)
    assert GameClass.MATCHING_PENNIES not in classify(m)
    assert GameClass.MATCHING_PENNIES in classify(m, require_zero_sum=False)


def test_ties_fail_strict_and_pass_weak():
    m = PayoffMatrix.from_cells(
        {("C", "C"): (3, 3), ("C", "D"): (1, 4), ("D", "C"): (4, 1), ("D", "D"): (1, 1)}
    )
    assert GameClass.PRISONERS_DILEMMA not in classify(m)
    assert GameClass.PRISONERS_DILEMMA in classify(m, strict=False)


def test_semantics_pd_ok():
    v = check_semantics(canonical_game(GameClass.PRISONERS_DILEMMA), GameClass.PRISONERS_DILEMMA)
    assert v.ok and v.defects == []


def test_semantics_swapped_pd_cell():
    src = canonical_source(GameClass.PRISONERS_DILEMMA).replace(
        "payoff('C', 'D', 10, 100)", "payoff('C', 'D', 100, 10)"
    )
    v = check_semantics(program(src), GameClass.PRISONERS_DILEMMA)
    assert not v.ok
    assert v.defects and {d.kind for d in v.defects} == {"ordering_violation"}


def test_semantics_hd_is_not_pd():
    v = check_semantics(canonical_game(GameClass.HAWK_DOVE), GameClass.PRISONERS_DILEMMA)
    assert not v.ok and v.detected_classes == {GameClass.HAWK_DOVE}
    assert any("P=-10 not > S=-1" in d.detail for d in v.defects)


def test_defect_detail_names_the_inequality():
    table = dict(TABLES[GameClass.STAG_HUNT][1])
    table[("hare", "stag")], table[("stag", "stag")] = (3, 0), (2, 3)
    v = check_semantics(program(game_source(GameClass.STAG_HUNT, table)), GameClass.STAG_HUNT)
    assert not v.ok
    assert all(d.detail.startswith(("row:", "col:")) for d in v.defects)


def test_defective_bs_fixture():
    v = check_semantics(program(fixture_text("bs_defective.pl")), GameClass.BATTLE_OF_SEXES)
    assert not v.ok and v.detected_classes == set()
    assert v.defects[0].kind == "ordering_violation"


def test_zero_sum_defect_for_mp():
    table = {k: (a, 0) for k, (a, _) in TABLES[GameClass.MATCHING_PENNIES][1].items()}
    v = check_semantics(program(game_source(GameClass.MATCHING_PENNIES, table)), GameClass.MATCHING_PENNIES)
    kinds = {d.kind for d in v.defects}
    assert "zero_sum_violation" in kinds


def test_wrong_shape():
    v = check_semantics(canonical_game(GameClass.ROCK_PAPER_SCISSORS), GameClass.PRISONERS_DILEMMA)
    assert [d.kind for d in v.defects] == ["wrong_shape"]
    v = check_semantics(canonical_game(GameClass.PRISONERS_DILEMMA), GameClass.ROCK_PAPER_SCISSORS)
    assert v.defects[0].kind == "wrong_shape"


def test_sequential_structure():
    v = check_semantics(canonical_game(GameClass.SEQUENTIAL_PD), GameClass.SEQUENTIAL_PD)
    assert v.ok
    # the simultaneous game has the right payoffs but two initial controllers
    v = check_semantics(canonical_game(GameClass.PRISONERS_DILEMMA), GameClass.SEQUENTIAL_PD)
    assert not v.ok
    assert v.defects[0].kind == "wrong_shape" and "exactly one player" in v.defects[0].detail


def test_symmetry_check():
    table = dict(TABLES[GameClass.PRISONERS_DILEMMA][1])
    table[("D", "C")] = (90, 10)
    src = game_source(GameClass.PRISONERS_DILEMMA, table)
    assert check_semantics(program(src), GameClass.PRISONERS_DILEMMA).ok
    v = check_semantics(program(src), GameClass.PRISONERS_DILEMMA, require_symmetry=True)
    assert [d.kind for d in v.defects] == ["asymmetry_violation"]


def test_rps_sign_pattern_violation():
    src = canonical_source(GameClass.ROCK_PAPER_SCISSORS)
    lines = [l for l in src.splitlines() if l.startswith("payoff(")]
    wins = [l for l in lines if ", 1, -1)" in l]
    broken = src.replace(wins[0], wins[0].replace(", 1, -1)", ", -1, 1)"))
    v = check_semantics(program(broken), GameClass.ROCK_PAPER_SCISSORS)
    assert not v.ok and any(d.kind == "ordering_violation" for d in v.defects)


@pytest.mark.parametrize("cls", CLASSIC)
def test_defective_helper_breaks_each_class(cls):
    assert not check_semantics(program(defective_source(cls)), cls).ok


def test_verdict_and_matrix_json_round_trip():
    v = check_semantics(canonical_game(GameClass.HAWK_DOVE), GameClass.PRISONERS_DILEMMA)
    assert SemanticVerdict.from_dict(v.to_dict()) == v
    m = v.matrix.transform(0, 1, "1/2")
    assert PayoffMatrix.from_dict(m.to_dict()) == m


def test_years_in_prison_pd_is_not_a_pd():
    # mutual defection at (5,5) outranks mutual cooperation, so R>P fails
    program, _ = parse_program(fixture_text("pd_years_inconsistent.pl"))
    v = check_semantics(program, GameClass.PRISONERS_DILEMMA)
    assert not v.ok and v.detected_classes == set()
    assert [d.detail for d in v.defects] == ["row: R=-1 not > P=5 (reversed)", "col: R=-1 not > P=5 (reversed)"]
